import os
from pathlib import Path

import numpy as np
import pytest

import qyoula

FIXTURES = Path(os.environ.get("QYOULA_FIXTURE_DIR", Path(__file__).parents[1] / "fixtures"))


def cavity():
    r = np.sqrt(2.0)
    return qyoula.slh_to_statespace(
        S=[[1.0]], H1=[[0.0]], H2=[[0.0]], L1=[[r]], L2=[[0.0]]
    )


def test_cavity_response():
    sys = cavity()
    assert sys.states == 2 and sys.inputs == 2 and sys.outputs == 2
    for w in np.linspace(-10.0, 10.0, 11):
        s = 1j * w
        expected = (s - 1.0) / (s + 1.0) * np.eye(2)
        assert np.abs(sys.response(w) - expected).max() < 1e-12


def test_cavity_is_realizable():
    verdict = qyoula.check_physical_realizability(cavity(), fields=1)
    assert verdict["overall"]
    assert verdict["max_junitarity_residual"] < 1e-10


def test_scalar_factors():
    plant = qyoula.StateSpace(
        A=[[1.0]], B=[[1.0, 1.0]], C=[[1.0], [1.0]], D=np.zeros((2, 2))
    )
    f = qyoula.coprime_factorization(plant, 1, 1, 1, 1)
    assert f["bezout_residual"] < 1e-9
    for w in (0.0, 0.7, 5.0):
        s = 1j * w
        assert abs(f["M"].response(w)[0, 0] - (s - 1.0) / (s + 1.0)) < 1e-9
        assert abs(f["V"].response(w)[0, 0] - (s + 3.0) / (s + 1.0)) < 1e-9


def test_norms():
    ap = qyoula.StateSpace(A=[[-1.0]], B=[[1.0]], C=[[-2.0]], D=[[1.0]])
    value, _ = qyoula.hinf_norm(ap)
    assert abs(value - 1.0) < 1e-6
    lp = qyoula.StateSpace(A=[[-2.0]], B=[[1.0]], C=[[3.0]], D=[[0.0]])
    assert abs(qyoula.h2_norm_sq(lp) - 9.0 / 4.0) < 1e-12
    report = qyoula.hinf_report(lp, omegas=[0.0, 1.0, 10.0])
    assert [w for w, _ in report["profile"]] == [0.0, 1.0, 10.0]
    assert report["norm"] >= max(s for _, s in report["profile"])


def test_errors():
    with pytest.raises(qyoula.Error):
        qyoula.StateSpace(A=np.zeros((2, 3)), B=[[1.0]], C=[[1.0]], D=[[0.0]])
    with pytest.raises(ValueError):
        qyoula.run("no-such-command", str(FIXTURES / "cavity.yaml"))


def test_commands(tmp_path):
    code, out, _ = qyoula.run("check-pr", str(FIXTURES / "cavity.yaml"))
    assert code == 0 and out
    code, _, _ = qyoula.run("factorize", str(FIXTURES / "unstabilizable.yaml"))
    assert code == 1
    code, _, err = qyoula.run("check-pr", str(FIXTURES / "malformed.yaml"))
    assert code == 2 and "malformed.yaml:3:10" in err
    code, _, _ = qyoula.run(
        "synthesize-h2", str(FIXTURES / "beamsplitter_synthesis.yaml"), out_dir=str(tmp_path)
    )
    assert code == 0
    assert (tmp_path / "trace.csv").exists()
