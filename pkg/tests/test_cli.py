import json

import pytest

from qphlab.cli import SUBCOMMANDS, main, parallel_map


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_copy_game_output(capsys):
    code, out, _ = _run(capsys, "copy-game", "--n", "1")
    assert code == 0
    assert json.loads(out) == {"mixed": 0.75, "n": 1, "pure": 1.0}


def test_qma2_curve_csv(capsys):
    code, out, _ = _run(capsys, "qma2-curve", "--eps", "0", "--step", "0.05")
    assert code == 0
    lines = out.split("\r\n")
    assert lines[0] == "delta,value,is_min" and lines[-1] == ""
    flagged = [row.split(",") for row in lines[1:-1] if row.endswith(",1")]
    assert len(flagged) == 1
    # [DERIVED] minimizer 1/(1 + sqrt 2) = sqrt 2 - 1, value (sqrt 2 - 1)^2 / 2 = 3/2 - sqrt 2
    assert float(flagged[0][0]) == pytest.approx(2 ** 0.5 - 1, abs=1e-8)
    assert float(flagged[0][1]) == pytest.approx(1.5 - 2 ** 0.5, abs=1e-8)


def test_missing_seed_is_config_error(capsys):
    code, _, err = _run(capsys, "peaked", "--n", "6")
    assert code == 2 and "seed" in err


def test_unknown_flag_and_subcommand(capsys):
    assert _run(capsys, "copy-game", "--bogus", "1")[0] == 2
    assert _run(capsys, "nonsense")[0] == 2


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"subcommand": "copy-game", "params": {"n": 2}}))
    code, out, _ = _run(capsys, "copy-game", "--config", str(cfg))
    assert code == 0 and json.loads(out)["n"] == 2
    code, out, _ = _run(capsys, "copy-game", "--config", str(cfg), "--n", "1")
    assert code == 0 and json.loads(out)["n"] == 1


def test_config_rejects_unknown_keys_and_wrong_subcommand(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 1, "colour": "red"}))
    assert _run(capsys, "copy-game", "--config", str(cfg))[0] == 2
    cfg.write_text(json.dumps({"subcommand": "kitaev"}))
    assert _run(capsys, "copy-game", "--config", str(cfg))[0] == 2
    assert _run(capsys, "copy-game", "--config", str(tmp_path / "missing.json"))[0] == 2
    (tmp_path / "bad.json").write_text("{")
    assert _run(capsys, "copy-game", "--config", str(tmp_path / "bad.json"))[0] == 2


def test_guard_failure_exits_one(capsys):
    # corpus circuit 0 has no ancilla to carry the output
    code, _, err = _run(capsys, "psh-reduce", "--corpus-index", "0", "--i", "1")
    assert code == 1 and err


def test_out_writes_manifest_and_is_deterministic(tmp_path, capsys):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert main(["peaked", "--n", "8", "--seeds", "50", "--seed", "11", "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    m0 = json.loads((tmp_path / "a.json.manifest.json").read_text())
    m1 = json.loads((tmp_path / "b.json.manifest.json").read_text())
    assert m0["hash"] == m1["hash"] and m0["hashed"]["seed"] == 11
    assert "wall_time_seconds" in m0["unhashed"]
    assert main(["peaked", "--n", "8", "--seeds", "50", "--seed", "12", "--out", str(paths[1])]) == 0
    assert paths[0].read_bytes() != paths[1].read_bytes()


def test_thread_count_does_not_change_results(capsys):
    _, one, _ = _run(capsys, "peaked", "--n", "8", "--seeds", "40", "--seed", "5", "--threads", "1")
    _, four, _ = _run(capsys, "peaked", "--n", "8", "--seeds", "40", "--seed", "5", "--threads", "4")
    assert one == four
    assert parallel_map(lambda x: x * x, range(10), 3) == [x * x for x in range(10)]


def test_thread_env_default(monkeypatch, capsys):
    monkeypatch.setenv("QPHLAB_THREADS", "0")
    assert _run(capsys, "copy-game")[0] == 2


def test_swap_prob_from_files(tmp_path, capsys):
    (tmp_path / "r.json").write_text(json.dumps({"layout": [2], "re": [1, 0], "im": [0, 0]}))
    (tmp_path / "s.json").write_text(json.dumps({"layout": [2], "re": [0.6, 0.8], "im": [0, 0]}))
    code, out, _ = _run(capsys, "swap-prob", "--rho", str(tmp_path / "r.json"), "--sigma", str(tmp_path / "s.json"))
    res = json.loads(out)
    # [DERIVED] 1/2 + |<0|psi>|^2 / 2 with overlap 0.36
    assert code == 0 and res["accept_prob"] == pytest.approx(0.68) and res["projector_trace"] == pytest.approx(0.68)
    assert _run(capsys, "swap-prob", "--rho", str(tmp_path / "r.json"))[0] == 2


def test_product_prob_epr(capsys):
    code, out, _ = _run(capsys, "product-prob")
    res = json.loads(out)
    assert code == 0 and res["p_prod"] == pytest.approx(0.75) and res["p_prod"] <= res["p_swap"]


def test_kitaev_and_complement(capsys):
    code, out, _ = _run(capsys, "kitaev", "--corpus-index", "3")
    res = json.loads(out)
    assert code == 0 and res["spectrum"]["kernel_dim"] == res["expected_kernel_dim"] == 4
    code, out, _ = _run(capsys, "complement", "--fixture", "yes", "--resolution", "0.2")
    res = json.loads(out)
    assert code == 0 and res["complement_energy"] == pytest.approx(-res["energy"])


def test_minimax_check_with_seed(capsys):
    code, out, _ = _run(capsys, "minimax-check", "--effects", "3", "--seed", "2")
    assert code == 0 and json.loads(out)["passed"]


def test_every_subcommand_has_help():
    assert set(SUBCOMMANDS) >= {"swap-prob", "product-prob", "game-solve", "copy-game", "qma2-curve",
                                "compile-qsigma3", "peaked", "gamma-channel", "amplify-toy", "kitaev",
                                "psh-reduce", "minimax-check", "complement", "acceptance"}
    assert all(sc.help for sc in SUBCOMMANDS.values())
