import hashlib
import json

import numpy as np

from epac.harness import reports
from epac.structs.configuration import LabSettings


def test_csv_cells():
    text = reports.format_csv(('a', 'b', 'c', 'd'), [
        {'a': 1, 'b': 0.1, 'c': None, 'd': True},
        {'a': 2, 'b': float('nan'), 'c': 'x,y', 'd': False},
    ])
    assert text == 'a,b,c,d\n1,0.1,,true\n2,,"x,y",false\n'


def test_csv_floats_are_exact():
    value = 1 / 3
    text = reports.format_csv(('v',), [{'v': value}])
    assert float(text.splitlines()[1]) == value


def test_json_documents():
    report = reports.Report(kind='grid', columns=('x',), rows=[{'x': np.float64(2.5), 'y': float('inf')}],
                            extra={'bd': [{'bd_rate': float('nan')}]}, provenance={'plan': None}, scales=2)
    document = report.as_dict()
    assert document['schema'] == reports.SCHEMA_VERSION
    assert document['kind'] == 'grid'
    assert document['columns'] == ['x']
    assert document['rows'] == [{'x': 2.5, 'y': None}]
    assert document['bd'] == [{'bd_rate': None}]
    assert document['metrics']['ms_ssim_scales'] == 2
    assert type(document['rows'][0]['x']) is float


def test_reports_are_written_deterministically(tmp_path):
    report = reports.Report(kind='bd', columns=('gop', 'bd_rate'), rows=[{'gop': 10, 'bd_rate': -3.25}])
    csv_path, json_path = reports.write_report(report, tmp_path / 'first')
    again = reports.write_report(report, tmp_path / 'second')
    assert csv_path.name == 'bd.csv' and json_path.name == 'bd.json'
    assert csv_path.read_bytes() == again[0].read_bytes()
    assert json_path.read_bytes() == again[1].read_bytes()
    assert csv_path.read_text() == 'gop,bd_rate\n10,-3.25\n'
    assert json.loads(json_path.read_text())['rows'] == [{'gop': 10, 'bd_rate': -3.25}]


def test_provenance_hashes_the_inputs(tmp_path):
    path = tmp_path / 'model.epac'
    path.write_bytes(b'parameters')
    echo = reports.provenance(LabSettings(), {'seed': 0}, inputs={'model': path})
    assert echo['inputs'] == {'model': hashlib.sha256(b'parameters').hexdigest()}
    assert echo['plan'] == {'seed': 0}
    assert echo['settings']['online']['variant'] == 'oeu'
    assert 'executor' not in echo['settings']['execution']
    json.dumps(echo)
