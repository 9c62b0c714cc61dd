import math

import pytest

from attnlut.bench import run_bench


def test_single_pixel_frame():
    result = run_bench(1, 1, n=5, threads=2, repeats=3)
    assert result.bitwise_equal
    assert math.isfinite(result.serial_mpix_per_s) and result.serial_mpix_per_s > 0


@pytest.mark.parametrize("threads", [1, 3, 8])
def test_threaded_output_matches_serial(threads):
    result = run_bench(97, 61, n=17, threads=threads, repeats=1)
    assert result.bitwise_equal
    assert f"{result.threads:>2} thr" in result.format()


def test_invalid_sizes():
    with pytest.raises(ValueError):
        run_bench(0, 5)
    with pytest.raises(ValueError):
        run_bench(5, 5, n=1)
