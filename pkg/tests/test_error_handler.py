import json
import pickle

from utils.error_handler import (
    EXIT_CONFIG,
    EXIT_RUNTIME,
    ConfigError,
    ConvergenceError,
    GenError,
    error_record,
    handle_errors,
)


def test_errors_survive_pickling():
    error = ConvergenceError("no convergence", 0.01, 50)
    clone = pickle.loads(pickle.dumps(error))
    assert type(clone) is ConvergenceError
    assert clone.message == "no convergence"
    assert clone.to_record() == error.to_record()


def test_error_records():
    record = ConfigError("bad k", "spatial.k").to_record()
    assert record['success'] is False
    assert record['exit_code'] == EXIT_CONFIG
    assert record['field'] == "spatial.k"
    assert error_record(ValueError("boom"))['error_code'] == 'INTERNAL_ERROR'


def test_handle_errors_returns_exit_codes(capsys):
    @handle_errors
    def fails():
        raise GenError("need two nodes")

    @handle_errors
    def crashes():
        raise RuntimeError("unexpected")

    @handle_errors
    def works():
        return None

    assert fails() == GenError("x").exit_code
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record['error'] == "need two nodes"
    assert crashes() == EXIT_RUNTIME
    assert works() == 0
