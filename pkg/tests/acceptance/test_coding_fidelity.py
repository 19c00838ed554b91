import numpy as np

from epac.bitstream import cdfs
from epac.bitstream.rangecoding import range_decode, range_encode
from epac.codec.entropy import EntropyModel


def test_hundred_thousand_symbols_within_the_estimate():
    rng = np.random.default_rng(2024)
    model = EntropyModel(loc=rng.uniform(-2.0, 2.0, size=8), scale=rng.uniform(0.3, 6.0, size=8), latent_max=64)
    table = cdfs.build_cdf(model)

    count = 100_000
    channels = np.arange(count) % table.channels
    symbols = np.empty(count, dtype=np.int64)
    for channel in range(table.channels):
        freqs = table.frequencies(channel)
        picked = channels == channel
        symbols[picked] = rng.choice(freqs.size, size=int(picked.sum()), p=freqs / freqs.sum())

    rows = table.rows()
    plan = [rows[c] for c in channels]
    data = range_encode(symbols.tolist(), plan)
    assert range_decode(data, plan, count) == symbols.tolist()

    ideal = cdfs.coding_bits(symbols, channels, table)
    assert len(data) * 8 <= ideal * 1.01 + 256
