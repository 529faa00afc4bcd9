"""Experiment runner: config validation, artifacts, determinism, exit codes."""

import json

import pytest

from ftnlab.cli import list_experiments, main

PULSE = '[pulse]\nkind = "rrc"\nbeta = 0.3\nsamples_per_T = 10\nspan = 12\n'


def write_cfg(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def capacity_cfg(tmp_path, taus="[1.0, 0.8]", extra=""):
    return write_cfg(tmp_path, (
        'experiment = "capacity"\n'
        f'taus = {taus}\n'
        'esn0_db = [0.0, 10.0]\n'
        'grid_size = 256\n' + extra + PULSE))


def test_list_has_seven_builtin_configs():
    entries = list_experiments()
    assert len(entries) == 7
    names = {e[0] for e in entries}
    assert names == {"fig1c-gaussian", "fig1c-qpsk", "mazo-table",
                     "fde-vs-td", "coded-waterfall", "fig2-af-slices",
                     "fig3-two-target"}


def test_list_appends_user_dir(tmp_path):
    write_cfg(tmp_path, 'experiment = "spectrum"\n', name="mine.toml")
    entries = list_experiments(user_dir=str(tmp_path))
    assert len(entries) == 8
    assert entries[-1][0] == "mine"
    # empty user dir leaves only the builtins
    empty = tmp_path / "empty"
    empty.mkdir()
    assert len(list_experiments(user_dir=str(empty))) == 7


def test_capacity_run_writes_csv_and_meta(tmp_path):
    cfg = capacity_cfg(tmp_path)
    out = tmp_path / "out"
    assert main(["capacity", "--config", cfg, "--out", str(out)]) == 0
    text = (out / "capacity.csv").read_text()
    lines = text.strip().split("\n")
    assert lines[0] == "tau,beta,EsN0_dB,EbN0_dB,rate,rate_units,method"
    assert len(lines) == 1 + 2 * 2
    # flat folded spectrum at tau=1: 1 bit/s over bandwidth 1.3, 9 digits
    assert lines[1] == "1,0.3,0,0,0.769230769,bits/s/Hz,gaussian"
    meta = json.loads((out / "meta.json").read_text())
    assert set(meta) == {"config", "seed", "version", "started_at", "elapsed_s"}
    assert meta["seed"] == 0


def test_identical_config_and_seed_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, (
        'experiment = "ber-td"\n'
        'taus = [0.8]\n'
        'ebn0_db = [4.0]\n'
        'n_symbols = 128\n'
        'n_frames = 2\n'
        'max_taps = 4\n' + PULSE))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["ber-td", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["ber-td", "--config", cfg, "--out", str(out2)]) == 0
    b1 = (out1 / "ber_td.csv").read_bytes()
    assert b1 == (out2 / "ber_td.csv").read_bytes()
    # a different seed must change the stochastic payload
    out3 = tmp_path / "c"
    assert main(["ber-td", "--config", cfg, "--out", str(out3),
                 "--seed", "5"]) == 0
    assert b1 != (out3 / "ber_td.csv").read_bytes()


def test_thread_count_does_not_change_output(tmp_path):
    cfg = write_cfg(tmp_path, (
        'experiment = "ber-td"\n'
        'taus = [0.9, 0.8]\n'
        'ebn0_db = [2.0, 4.0]\n'
        'n_symbols = 64\n'
        'n_frames = 2\n'
        'max_taps = 3\n' + PULSE))
    out1, out4 = tmp_path / "t1", tmp_path / "t4"
    assert main(["ber-td", "--config", cfg, "--out", str(out1),
                 "--threads", "1"]) == 0
    assert main(["ber-td", "--config", cfg, "--out", str(out4),
                 "--threads", "4"]) == 0
    assert (out1 / "ber_td.csv").read_bytes() == (out4 / "ber_td.csv").read_bytes()


def test_out_of_range_tau_names_the_field(tmp_path, capsys):
    cfg = capacity_cfg(tmp_path, taus="[1.2]")
    assert main(["capacity", "--config", cfg, "--out",
                 str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "taus[0]" in err


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = capacity_cfg(tmp_path, extra="bogus_knob = 3\n")
    assert main(["capacity", "--config", cfg, "--out",
                 str(tmp_path / "o")]) == 2
    assert "bogus_knob" in capsys.readouterr().err


def test_missing_required_field(tmp_path, capsys):
    cfg = write_cfg(tmp_path, 'experiment = "capacity"\ntaus = [1.0]\n' + PULSE)
    assert main(["capacity", "--config", cfg, "--out",
                 str(tmp_path / "o")]) == 2
    assert "esn0_db" in capsys.readouterr().err


def test_mismatched_experiment_declaration(tmp_path, capsys):
    cfg = capacity_cfg(tmp_path)
    assert main(["spectrum", "--config", cfg, "--out",
                 str(tmp_path / "o")]) == 2
    assert "experiment" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["capacity", "--config", str(tmp_path / "nope.toml")]) == 2
    assert "not found" in capsys.readouterr().err


def test_state_budget_violation_exits_3(tmp_path, capsys):
    cfg = write_cfg(tmp_path, (
        'experiment = "ber-td"\n'
        'taus = [0.5]\n'
        'ebn0_db = [4.0]\n'
        'constellation = "qpsk"\n'
        'n_symbols = 64\n'
        'n_frames = 1\n'
        'max_taps = 15\n'
        'coverage = 0.9999999\n' + PULSE))
    assert main(["ber-td", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "budget" in capsys.readouterr().err.lower()


def test_stochastic_tables_carry_seed_column(tmp_path):
    cfg = write_cfg(tmp_path, (
        'experiment = "sense-af"\n'
        'taus = [0.8]\n'
        'n_symbols = 16\n'
        'trials = 100\n'
        'doppler_points = 21\n'
        '[pulse]\nkind = "rrc"\nbeta = 0.5\nsamples_per_T = 10\nspan = 12\n'))
    out = tmp_path / "out"
    assert main(["sense-af", "--config", cfg, "--out", str(out),
                 "--seed", "3"]) == 0
    for name in ("af_grid.csv", "af_peaks.csv"):
        header = (out / name).read_text().split("\n")[0].split(",")
        assert "seed" in header


def test_mazo_runner_emits_scan_rows(tmp_path):
    cfg = write_cfg(tmp_path, (
        'experiment = "mazo"\n'
        'pulses = [{ kind = "rrc", beta = 0.3 }]\n'
        'tau_start = 0.75\n'
        'tau_stop = 0.71\n'
        'tau_step = 0.01\n'
        'max_len = 8\n'
        'span = 16\n'))
    out = tmp_path / "out"
    assert main(["mazo", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "mazo.csv").read_text().strip().split("\n")
    assert lines[0].split(",")[:3] == ["kind", "beta", "span"]
    assert len(lines) == 1 + 5
    taus = [float(l.split(",")[5]) for l in lines[1:]]
    assert taus == sorted(taus, reverse=True)


def test_sense_ml_summary_rates(tmp_path):
    cfg = write_cfg(tmp_path, (
        'experiment = "sense-ml"\n'
        'taus = [0.6]\n'
        'duration = 16.0\n'
        'targets = [[0.5, 1.0, 0.0], [-0.4, 0.15, 0.0]]\n'
        'noise_psd = 0.01\n'
        'n_runs = 4\n'
        'grid_points = 101\n'
        '[pulse]\nkind = "rrc"\nbeta = 0.5\nsamples_per_T = 10\nspan = 12\n'))
    out = tmp_path / "out"
    assert main(["sense-ml", "--config", cfg, "--out", str(out)]) == 0
    runs = (out / "sense_ml_runs.csv").read_text().strip().split("\n")
    summary = (out / "sense_ml_summary.csv").read_text().strip().split("\n")
    assert len(runs) == 1 + 4
    rate = float(summary[1].split(",")[6])
    assert 0.0 <= rate <= 1.0


def test_coded_runner_rows_per_iteration(tmp_path):
    cfg = write_cfg(tmp_path, (
        'experiment = "coded"\n'
        'tau = 0.8\n'
        'ebn0_db = [2.0]\n'
        'info_len = 64\n'
        'iterations = 3\n'
        'n_frames = 2\n'
        'max_taps = 4\n' + PULSE))
    out = tmp_path / "out"
    assert main(["coded", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "coded.csv").read_text().strip().split("\n")
    assert len(lines) == 1 + 3
    iters = [int(l.split(",")[7]) for l in lines[1:]]
    assert iters == [1, 2, 3]
