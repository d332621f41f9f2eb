import textwrap

import pytest

from kirchhoff import kernels


@pytest.fixture
def write_config(tmp_path):
    """Write dedented config text to a file and return its path."""

    def _write(text, name="run.cfg"):
        p = tmp_path / name
        p.write_text(textwrap.dedent(text).lstrip())
        return p

    return _write


@pytest.fixture(params=kernels.available())
def backend(request):
    return request.param
