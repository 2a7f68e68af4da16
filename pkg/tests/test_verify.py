import pytest

from verification.registry import (MODULES, clear_faults, format_result, inject_fault, registered,
                                   run_check, run_checks)


@pytest.fixture(autouse=True)
def no_faults():
    clear_faults()
    yield
    clear_faults()


def test_every_module_has_checks():
    assert {c.module for c in registered()} == set(MODULES)


def test_filter_rejects_unknown_module():
    with pytest.raises(ValueError):
        registered(['optimizer'])


@pytest.mark.parametrize('module', ['autodiff-core', 'structured-layers', 'rope-math'])
def test_checks_pass(module):
    results = run_checks([module], verbose=False)
    failed = [format_result(r) for r in results if not r.passed]
    assert not failed, '\n'.join(failed)


@pytest.mark.slow
@pytest.mark.parametrize('module', ['model', 'training'])
def test_slow_checks_pass(module):
    results = run_checks([module], verbose=False)
    failed = [format_result(r) for r in results if not r.passed]
    assert not failed, '\n'.join(failed)


def test_tying_fault_is_caught():
    inject_fault('tying')
    results = {r.name: r for r in run_checks(['structured-layers'], verbose=False)}
    assert not results['tying_relations_survive_updates'].passed
    assert results['tied_forward_matches_complex_oracle'].passed


def test_unknown_fault():
    with pytest.raises(ValueError):
        inject_fault('softmax')


def test_model_gradient_check_passes():
    item = next(c for c in registered(['model'])
                if c.name == 'model_gradients_match_central_differences')
    result = run_check(item)
    assert result.passed, format_result(result)
    assert result.measured < 1e-4
