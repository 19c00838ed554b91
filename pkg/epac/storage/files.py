import json
import os
import pathlib
import tempfile
from typing import Any, Union

PathLike = Union[str, 'os.PathLike[str]']


def write_atomic(path: PathLike, data: bytes) -> None:
    """
    Write the file so that the readers see either the old or the new content.

    The data goes to a temporary file in the same directory first,
    and is then renamed over the target.
    """
    target = pathlib.Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f'.{target.name}.', suffix='.tmp', dir=str(target.parent))
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
        os.replace(tmp, target)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_json(path: PathLike, payload: Any) -> None:
    """ Deterministic JSON: sorted keys, fixed separators, a trailing newline. """
    text = json.dumps(payload, sort_keys=True, indent=2, separators=(',', ': '))
    write_atomic(path, (text + '\n').encode('utf-8'))


def read_json(path: PathLike) -> Any:
    with open(path, 'rt', encoding='utf-8') as f:
        return json.load(f)
