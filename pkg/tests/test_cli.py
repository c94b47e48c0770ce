import csv
import json

import numpy as np
import pytest

from catenc.cli import EXIT_ENCODER, EXIT_INGEST, EXIT_OK, EXIT_USAGE, fnv1a64, main


@pytest.fixture
def fixture_csv(tmp_path):
    path = tmp_path / "data.csv"
    rows = ["a,b,cat,y"]
    rng = np.random.default_rng(0)
    for i in range(30):
        cat = "uvw"[i % 3]
        rows.append(f"{rng.normal():.6f},{rng.normal():.6f},{cat},{rng.normal():.6f}")
    path.write_text("\n".join(rows) + "\n")
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestFnv1a:
    def test_known_vectors(self):
        # standard FNV-1a 64-bit test vectors
        assert fnv1a64(b"") == "cbf29ce484222325"
        assert fnv1a64(b"a") == "af63dc4c8601ec8c"
        assert fnv1a64(b"foobar") == "85944171f73967e8"


class TestEncode:
    def test_means_output_width(self, fixture_csv, tmp_path):
        out = tmp_path / "enc.csv"
        code = main(["encode", "--input", str(fixture_csv), "--cat", "cat", "--target", "y",
                     "--encoder", "means", "--output", str(out)])
        assert code == EXIT_OK
        rows = read_csv(out)
        # p=2 features + p=2 encoding columns beyond the target
        assert rows[0] == ["a", "b", "means_1", "means_2", "y"]
        assert len(rows) == 31
        manifest = json.loads((tmp_path / "enc.csv.manifest.json").read_text())
        assert manifest["command"] == "encode"
        assert str(fixture_csv) in manifest["input_digests"]

    def test_default_rank_recorded(self, fixture_csv, tmp_path):
        out = tmp_path / "enc.csv"
        code = main(["encode", "--input", str(fixture_csv), "--cat", "cat", "--target", "y",
                     "--encoder", "lowrank_svd", "--output", str(out)])
        assert code == EXIT_OK
        manifest = json.loads((tmp_path / "enc.csv.manifest.json").read_text())
        assert manifest["seeds"]["resolved_rank"] == 2  # min(p, M, 8) = min(2, 3, 8)

    def test_missing_required_flag_is_usage_error(self, fixture_csv, tmp_path, capsys):
        code = main(["encode", "--input", str(fixture_csv), "--target", "y",
                     "--encoder", "means", "--output", str(tmp_path / "x.csv")])
        assert code == EXIT_USAGE
        assert "usage" in capsys.readouterr().err

    def test_unknown_encoder(self, fixture_csv, tmp_path, capsys):
        code = main(["encode", "--input", str(fixture_csv), "--cat", "cat", "--target", "y",
                     "--encoder", "magic", "--output", str(tmp_path / "x.csv")])
        assert code == EXIT_USAGE
        assert "valid" in capsys.readouterr().err

    def test_missing_input_file(self, tmp_path, capsys):
        code = main(["encode", "--input", str(tmp_path / "no.csv"), "--cat", "cat",
                     "--target", "y", "--encoder", "means",
                     "--output", str(tmp_path / "x.csv")])
        assert code == EXIT_INGEST

    def test_encoder_error_exit_code(self, fixture_csv, tmp_path, capsys):
        code = main(["encode", "--input", str(fixture_csv), "--cat", "cat", "--target", "y",
                     "--encoder", "lowrank_svd", "--rank", "40",
                     "--output", str(tmp_path / "x.csv")])
        assert code == EXIT_ENCODER

    def test_unscaled_and_raw_mode_flags_change_output(self, fixture_csv, tmp_path):
        outputs = {}
        for name, flags in (("scaled", []), ("unscaled", ["--unscaled"]),
                            ("raw", ["--no-center"])):
            out = tmp_path / f"{name}.csv"
            assert main(["encode", "--input", str(fixture_csv), "--cat", "cat",
                         "--target", "y", "--encoder", "lowrank_svd", "--rank", "2",
                         "--output", str(out)] + flags) == EXIT_OK
            outputs[name] = out.read_bytes()
        assert outputs["scaled"] != outputs["unscaled"]
        assert outputs["scaled"] != outputs["raw"]


class TestSimulate:
    def test_shapes_and_truth(self, tmp_path):
        prefix = tmp_path / "sim"
        code = main(["simulate", "--n", "100", "--p", "3", "--m", "4", "--k-latent", "2",
                     "--p-assign", "0.9", "--outcome", "linear", "--noise", "0.5",
                     "--seed", "7", "--out-prefix", str(prefix)])
        assert code == EXIT_OK
        rows = read_csv(tmp_path / "sim.csv")
        assert rows[0] == ["x1", "x2", "x3", "g", "y"]
        assert len(rows) == 101
        truth = json.loads((tmp_path / "sim.truth.json").read_text())
        assert np.asarray(truth["phi"]).shape == (2, 4)
        assert truth["seed"] == 7

    def test_byte_identical_reruns(self, tmp_path):
        args = ["simulate", "--n", "80", "--p", "2", "--m", "4", "--k-latent", "2",
                "--outcome", "piecewise", "--seed", "3"]
        main(args + ["--out-prefix", str(tmp_path / "one")])
        main(args + ["--out-prefix", str(tmp_path / "two")])
        assert (tmp_path / "one.csv").read_bytes() == (tmp_path / "two.csv").read_bytes()
        assert (tmp_path / "one.truth.json").read_bytes() == \
            (tmp_path / "two.truth.json").read_bytes()

    def test_divisibility_validation(self, tmp_path, capsys):
        code = main(["simulate", "--n", "100", "--p", "2", "--m", "5", "--k-latent", "2",
                     "--out-prefix", str(tmp_path / "sim")])
        assert code == EXIT_USAGE
        assert "divisible" in capsys.readouterr().err

    def test_roundtrip_through_load_csv(self, tmp_path):
        from catenc.dataset import load_csv
        prefix = tmp_path / "sim"
        main(["simulate", "--n", "60", "--p", "2", "--m", "6", "--k-latent", "3",
              "--seed", "1", "--out-prefix", str(prefix)])
        ds = load_csv(tmp_path / "sim.csv", "g", "y")
        assert (ds.n, ds.p, ds.m) == (60, 2, 6)


class TestBench:
    def test_fixture_dataset_report(self, fixture_csv, tmp_path, capsys):
        prefix = tmp_path / "rep"
        code = main(["bench", "--input", str(fixture_csv), "--cat", "cat", "--target", "y",
                     "--encoders", "onehot,means", "--learner", "ridge", "--folds", "2",
                     "--report-prefix", str(prefix)])
        assert code == EXIT_OK
        table = capsys.readouterr().out
        assert "onehot" in table and "means" in table
        rows = read_csv(tmp_path / "rep.report.csv")
        assert rows[0] == ["cell", "encoder", "mean_mse", "improvement_pct", "t", "p"]
        assert len(rows) == 3
        onehot_row = [r for r in rows if r[1] == "onehot"][0]
        assert float(onehot_row[3]) == 0.0
        report = json.loads((tmp_path / "rep.report.json").read_text())
        assert len(report["reports"]) == 1

    def test_sim_grid_cells(self, tmp_path):
        grid = [dict(n=120, p=2, m=4, k_latent=2, p_assign=0.9, noise_sd=0.5,
                     outcome="linear", seed=0),
                dict(n=120, p=2, m=4, k_latent=2, p_assign=0.9, noise_sd=0.5,
                     outcome="group_linear", seed=1)]
        grid_path = tmp_path / "grid.json"
        grid_path.write_text(json.dumps(grid))
        prefix = tmp_path / "sweep"
        code = main(["bench", "--sim-grid", str(grid_path), "--encoders", "onehot,means",
                     "--learner", "ridge", "--folds", "2", "--seeds", "2", "--jobs", "1",
                     "--report-prefix", str(prefix)])
        assert code == EXIT_OK
        report = json.loads((tmp_path / "sweep.report.json").read_text())
        assert len(report["reports"]) == 4
        assert "median_improvement_pct" in report

    def test_unknown_encoder_lists_valid_kinds(self, fixture_csv, tmp_path, capsys):
        code = main(["bench", "--input", str(fixture_csv), "--cat", "cat", "--target", "y",
                     "--encoders", "onehot,nope", "--report-prefix", str(tmp_path / "r")])
        assert code == EXIT_USAGE
        err = capsys.readouterr().err
        assert "nope" in err and "means" in err

    def test_requires_exactly_one_input_mode(self, tmp_path, capsys):
        code = main(["bench", "--report-prefix", str(tmp_path / "r")])
        assert code == EXIT_USAGE

    def test_env_seed_override(self, fixture_csv, tmp_path, monkeypatch):
        prefix = tmp_path / "rep"
        monkeypatch.setenv("CATENC_SEED", "99")
        main(["bench", "--input", str(fixture_csv), "--cat", "cat", "--target", "y",
              "--encoders", "onehot", "--seed", "3", "--report-prefix", str(prefix)])
        manifest = json.loads((tmp_path / "rep.manifest.json").read_text())
        assert manifest["seeds"]["seed"] == 99

    def test_manifest_has_stable_keys_and_digest(self, fixture_csv, tmp_path):
        prefix = tmp_path / "rep"
        main(["bench", "--input", str(fixture_csv), "--cat", "cat", "--target", "y",
              "--encoders", "onehot", "--report-prefix", str(prefix)])
        text = (tmp_path / "rep.manifest.json").read_text()
        manifest = json.loads(text)
        assert list(manifest) == sorted(manifest)
        digest = manifest["input_digests"][str(fixture_csv)]
        assert digest == fnv1a64(fixture_csv.read_bytes())


class TestDeterminism:
    def test_bench_reports_byte_identical(self, fixture_csv, tmp_path):
        args = ["bench", "--input", str(fixture_csv), "--cat", "cat", "--target", "y",
                "--encoders", "onehot,means,fisher", "--learner", "forest", "--trees", "5",
                "--folds", "2", "--seed", "11"]
        main(args + ["--report-prefix", str(tmp_path / "one")])
        main(args + ["--report-prefix", str(tmp_path / "two")])
        assert (tmp_path / "one.report.json").read_bytes() == \
            (tmp_path / "two.report.json").read_bytes()
        assert (tmp_path / "one.report.csv").read_bytes() == \
            (tmp_path / "two.report.csv").read_bytes()
