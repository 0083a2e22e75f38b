import json
import subprocess
import sys

import pytest

from nmfair.cli import main


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


@pytest.fixture
def workdir(tmp_path, capsys):
    model = tmp_path / "doughnut.json"
    assert run(["doughnut", "--gamma", 0.9, "--out", model], capsys)[0] == 0
    alt = tmp_path / "alt.json"
    alt.write_text(json.dumps({"format_version": 1, "kind": "sequence", "sequence": ["toX", "toY"]}))
    onlyx = tmp_path / "x.json"
    onlyx.write_text(json.dumps({"format_version": 1, "kind": "sequence", "sequence": ["toX"]}))
    return tmp_path, model, alt, onlyx


def test_simulate_writes_traces_and_manifest(workdir, capsys):
    d, model, alt, _ = workdir
    out = d / "t.jsonl"
    code, doc = run(["simulate", "--model", model, "--policy", alt, "--horizon", 6, "--seed", 4,
                     "--rollouts", 3, "--out", out], capsys)
    assert code == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    assert json.loads(lines[0])["actions"] == ["toX", "toY"] * 3
    manifest = json.loads((d / "t.jsonl.manifest.json").read_text())
    assert manifest["seed"] == 4 and manifest["subcommand"] == "simulate"
    assert len(manifest["inputs"]["model"]["sha256"]) == 64
    assert doc["manifest"] == manifest


def test_verify_trace_exit_codes(workdir, capsys):
    d, model, alt, onlyx = workdir
    t_alt, t_x = d / "a.jsonl", d / "x.jsonl"
    run(["simulate", "--model", model, "--policy", alt, "--horizon", 8, "--out", t_alt], capsys)
    run(["simulate", "--model", model, "--policy", onlyx, "--horizon", 8, "--out", t_x], capsys)
    code, doc = run(["verify-trace", "--model", model, "--notion", "periodic", "--k", 2, "--trace", t_alt], capsys)
    assert code == 0 and doc["report"]["verdict"] == "pass"
    code, doc = run(["verify-trace", "--model", model, "--notion", "anytime", "--epsilon", 0.4,
                     "--trace", t_x], capsys)
    assert code == 1
    cex = doc["report"]["traces"][0]["counterexample"]
    assert cex["step"] == 1 and cex["value"] == 0.5
    code, _ = run(["verify-trace", "--model", model, "--notion", "periodic", "--k", 20, "--trace", t_alt], capsys)
    assert code == 2


def test_verify_trace_interval_and_bounded(workdir, capsys):
    d, model, alt, onlyx = workdir
    t = d / "a.jsonl"
    run(["simulate", "--model", model, "--policy", alt, "--horizon", 8, "--out", t], capsys)
    code, _ = run(["verify-trace", "--model", model, "--notion", "anytime", "--epsilon", 0.4,
                   "--interval", "2:2", "--trace", t], capsys)
    assert code == 0
    code, _ = run(["verify-trace", "--model", model, "--notion", "anytime", "--epsilon", 0.4,
                   "--interval", "2:", "--trace", t], capsys)
    assert code == 1  # f_3 = 1/2
    code, _ = run(["verify-trace", "--model", model, "--notion", "bounded", "--checkpoint", "s_init",
                   "--trace", t], capsys)
    assert code == 1


def test_verify_policy_methods(workdir, capsys):
    d, model, alt, onlyx = workdir
    for method in ("exhaustive", "mc"):
        code, doc = run(["verify-policy", "--model", model, "--policy", alt, "--notion", "exact-periodic",
                         "--k", 2, "--method", method, "--rollouts", 50, "--horizon", 20, "--seed", 1], capsys)
        assert code == 0
        assert doc["report"]["method"] == ("exhaustive" if method == "exhaustive" else "monte-carlo")
    cex = d / "cex.jsonl"
    code, doc = run(["verify-policy", "--model", model, "--policy", onlyx, "--notion", "limit", "--delta", 0.1,
                     "--method", "exhaustive", "--horizon", 20, "--counterexample-out", cex], capsys)
    assert code == 1 and cex.exists()


def test_compile_and_learn(workdir, capsys):
    d, model, _, _ = workdir
    product = d / "product.json"
    code, doc = run(["compile", "--model", model, "--out", product], capsys)
    assert code == 0 and doc["report"]["product_states"] == 7
    policy = d / "policy.json"
    code, doc = run(["learn", "--product", product, "--alpha1", 0, "--alpha2", 1, "--method", "vi",
                     "--out", policy], capsys)
    assert code == 0
    assert doc["report"]["policy"]["s_init|1"] == "toY"
    assert doc["report"]["policy"]["s_init|-1"] == "toX"
    assert (d / "policy.json.log.jsonl").read_text().count("\n") > 10
    code, doc = run(["learn", "--product", product, "--alpha1", 0, "--alpha2", 1, "--method", "q",
                     "--episodes", 300, "--seed", 2, "--out", d / "q.json"], capsys)
    assert code == 0
    # the learned product policy is usable on the base model
    code, doc = run(["verify-policy", "--model", model, "--policy", policy, "--notion", "periodic", "--k", 2,
                     "--horizon", 30], capsys)
    assert code == 0


def test_compile_without_machine_is_data_error(workdir, capsys):
    d, model, _, _ = workdir
    spec = d / "nash.json"
    spec.write_text(json.dumps({"kind": "nash"}))
    code, _ = run(["compile", "--model", model, "--fairness", spec, "--out", d / "p.json"], capsys)
    assert code == 3


def test_witness(capsys):
    code, doc = run(["witness", "--horizon", 10], capsys)
    assert code == 0
    assert doc["report"]["distinct_imbalance_values"] == 6
    assert doc["report"]["markov_output_bound"] == 2


def test_usage_errors(workdir, capsys):
    d, model, _, _ = workdir
    with pytest.raises(SystemExit) as info:
        main(["verify-trace", "--model", str(model)])
    assert info.value.code == 3
    code, _ = run(["verify-trace", "--model", model, "--notion", "anytime", "--trace", d / "missing.jsonl"], capsys)
    assert code == 3
    code, _ = run(["simulate", "--model", d / "nope.json", "--policy", d / "nope.json", "--horizon", 3,
                   "--out", d / "o.jsonl"], capsys)
    assert code == 3


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "nmfair.cli", "witness", "--horizon", "4"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["report"]["values"] == [0, 2, 4]
