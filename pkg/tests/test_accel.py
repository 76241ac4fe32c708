import pytest

from fieldforge import accel


def test_backend_env_selection(monkeypatch):
    monkeypatch.setenv("FIELDFORGE_BACKEND", "numpy")
    assert accel.backend() == "numpy"
    assert not accel.use_numba()

    monkeypatch.setenv("FIELDFORGE_BACKEND", "auto")
    assert accel.backend() in {"numpy", "numba"}

    if accel.have_numba():
        monkeypatch.setenv("FIELDFORGE_BACKEND", "numba")
        assert accel.use_numba()


def test_backend_rejects_unknown(monkeypatch):
    monkeypatch.setenv("FIELDFORGE_BACKEND", "gpu")
    with pytest.raises(ValueError):
        accel.backend()


def test_set_num_threads_validates():
    with pytest.raises(ValueError):
        accel.set_num_threads(0)
    accel.set_num_threads(1)
    accel.set_num_threads(2)
