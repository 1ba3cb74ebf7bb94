import csv
import json

import numpy as np
import pytest

import matnet.homogenization as hz
from matnet import cli, fileio
from matnet import network as nw
from matnet import training as tr
from matnet.equilibrium import LoadStep


def read_csv_rows(path):
    with open(path) as fh:
        assert fh.readline().startswith("#")
        return list(csv.DictReader(fh))


@pytest.fixture()
def teacher_ckpt(tmp_path):
    params = nw.init_parameters(2, np.random.default_rng(11))
    p = tmp_path / "teacher.ckpt"
    fileio.save_checkpoint(p, params, {"seed": 11})
    return p


@pytest.fixture()
def elastic_material(tmp_path):
    p = tmp_path / "mat.json"
    fileio.save_material(p, {"model": "elastic", "C11_GPa": 191.0,
                             "C12_GPa": 162.0, "C44_GPa": 42.2})
    return p


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        params = nw.init_parameters(3, np.random.default_rng(0))
        p = tmp_path / "a.ckpt"
        fileio.save_checkpoint(p, params, {"seed": 3})
        loaded, prov = fileio.load_checkpoint(p)
        for f in nw.ParameterSet.FIELDS:
            assert np.array_equal(getattr(loaded, f), getattr(params, f))
        assert prov["seed"] == 3

    def test_unknown_version_rejected(self, tmp_path):
        params = nw.init_parameters(1, np.random.default_rng(1))
        p = tmp_path / "a.ckpt"
        fileio.save_checkpoint(p, params)
        doc = json.loads(p.read_text())
        doc["version"] = 99
        p.write_text(json.dumps(doc))
        with pytest.raises(fileio.FormatError, match="version"):
            fileio.load_checkpoint(p)

    def test_wrong_format_rejected(self, tmp_path):
        p = tmp_path / "a.ckpt"
        p.write_text(json.dumps({"format": "something-else", "version": 1}))
        with pytest.raises(fileio.FormatError, match="format"):
            fileio.load_checkpoint(p)


class TestDatasetFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        topo = nw.build_topology(2)
        teacher = nw.init_parameters(2, rng)
        ds = tr.synthesize_teacher_dataset(teacher, topo, 7, rng)
        p = tmp_path / "d.jsonl"
        fileio.save_dataset(p, ds, {"seed": 2})
        loaded = fileio.load_dataset(p)
        assert len(loaded) == 7
        for a, b in zip(ds.samples, loaded.samples):
            assert np.array_equal(a.phase1, b.phase1)
            assert np.array_equal(a.phase2, b.phase2)
            assert np.array_equal(a.target, b.target)

    def test_malformed_line_names_line_number(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        header = {"format": "matnet-dataset", "version": 1}
        p.write_text(json.dumps(header) + "\n{not json}\n")
        with pytest.raises(fileio.FormatError, match="bad.jsonl:2"):
            fileio.load_dataset(p)

    def test_asymmetric_target_rejected(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        header = {"format": "matnet-dataset", "version": 1}
        target = np.arange(36.0)
        rec = {"phase1": {"C11": "2.0", "C12": "1.0", "C44": "1.0"},
               "target": [repr(float(v)) for v in target]}
        p.write_text(json.dumps(header) + "\n" + json.dumps(rec) + "\n")
        with pytest.raises(fileio.FormatError, match="symmetric"):
            fileio.load_dataset(p)

    def test_full_matrix_phase_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        A = rng.normal(size=(6, 6))
        C = A + A.T + 10 * np.eye(6)
        ds = tr.Dataset([tr.Sample(C, None, np.eye(6))])
        p = tmp_path / "d.jsonl"
        fileio.save_dataset(p, ds)
        loaded = fileio.load_dataset(p)
        assert np.array_equal(loaded.samples[0].phase1, C)


class TestGenData:
    def test_deterministic_bytes(self, tmp_path, teacher_ckpt):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        for out in (a, b):
            assert cli.main(["gen-data", "--teacher", str(teacher_ckpt),
                             "--samples", "12", "--seed", "9",
                             "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_record_count(self, tmp_path, teacher_ckpt):
        out = tmp_path / "d.jsonl"
        cli.main(["gen-data", "--teacher", str(teacher_ckpt), "--samples",
                  "5", "--seed", "1", "--out", str(out)])
        assert len(out.read_text().strip().splitlines()) == 6  # header + 5

    def test_zero_samples_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["gen-data", "--samples", "0",
                      "--out", str(tmp_path / "x.jsonl")])
        assert exc.value.code == 2

    def test_sampling_mode_without_teacher(self, tmp_path):
        out = tmp_path / "pairs.jsonl"
        assert cli.main(["gen-data", "--samples", "4", "--seed", "2",
                         "--out", str(out)]) == 0
        ds = fileio.load_dataset(out)
        assert len(ds) == 4
        assert all(s.target is None for s in ds.samples)


class TestTrainCommand:
    def test_parser_defaults_match_train_config(self):
        args = cli.build_parser().parse_args(
            ["train", "--data", "d", "--out", "o"])
        defaults = tr.TrainConfig()
        assert args.epochs == defaults.epochs == 200
        assert args.lr == defaults.learning_rate == 1e-3
        assert args.batch == defaults.batch_size == 20
        assert args.weight_decay == defaults.weight_decay == 0.0

    def test_train_writes_checkpoint_and_curves(self, tmp_path,
                                                teacher_ckpt):
        data = tmp_path / "d.jsonl"
        cli.main(["gen-data", "--teacher", str(teacher_ckpt), "--samples",
                  "20", "--seed", "4", "--out", str(data)])
        ckpt = tmp_path / "s.ckpt"
        curves = tmp_path / "c.csv"
        assert cli.main(["train", "--data", str(data), "--out", str(ckpt),
                         "--curves", str(curves), "--depth", "4",
                         "--epochs", "3", "--seed", "5"]) == 0
        params, prov = fileio.load_checkpoint(ckpt)
        assert params.z.shape == (16,)
        assert params.theta.shape == (15,)
        assert prov["epochs"] == 3
        rows = read_csv_rows(curves)
        assert len(rows) == 4  # epochs + 1, including the epoch-0 row
        assert rows[0]["epoch"] == "0"

    def test_dataset_without_targets_is_data_error(self, tmp_path):
        data = tmp_path / "p.jsonl"
        cli.main(["gen-data", "--samples", "4", "--seed", "2",
                  "--out", str(data)])
        assert cli.main(["train", "--data", str(data),
                         "--out", str(tmp_path / "x.ckpt"),
                         "--depth", "2", "--epochs", "1"]) == cli.EXIT_DATA

    def test_missing_dataset_is_data_error(self, tmp_path):
        assert cli.main(["train", "--data", str(tmp_path / "nope.jsonl"),
                         "--out", str(tmp_path / "x.ckpt")]) == cli.EXIT_DATA


class TestPredictCommand:
    def test_identity_path_zero_stress(self, tmp_path, teacher_ckpt,
                                       elastic_material):
        path = tmp_path / "path.json"
        fileio.save_load_path(path, steps=[LoadStep(np.eye(3), 0.5)] * 3)
        hist = tmp_path / "h.csv"
        assert cli.main(["predict", "--checkpoint", str(teacher_ckpt),
                         "--material", str(elastic_material),
                         "--path", str(path), "--out", str(hist)]) == 0
        rows = read_csv_rows(hist)
        assert len(rows) == 3
        for row in rows:
            for c in ("P11", "P22", "P33", "P12", "P21"):
                assert abs(float(row[c])) < 1e-6

    def test_tiny_strain_matches_offline_stiffness(self, tmp_path,
                                                   teacher_ckpt,
                                                   elastic_material):
        eps = 1e-6
        F = np.eye(3)
        F[0, 0] += eps
        path = tmp_path / "path.json"
        fileio.save_load_path(path, steps=[LoadStep(F, 1.0)])
        hist = tmp_path / "h.csv"
        orient = tmp_path / "o.csv"
        assert cli.main(["predict", "--checkpoint", str(teacher_ckpt),
                         "--material", str(elastic_material),
                         "--path", str(path), "--out", str(hist),
                         "--dump-orientations", str(orient)]) == 0
        row = read_csv_rows(hist)[0]
        P = np.array([[float(row[f"P{r}{c}"]) for c in "123"]
                      for r in "123"])
        params, _ = fileio.load_checkpoint(teacher_ckpt)
        topo = nw.build_topology(params.depth)
        C_gpa = tr.cubic_stiffness(191.0, 162.0, 42.2)
        C_bar = hz.homogenize(params, topo,
                              hz.PhaseAssignment("single", C_gpa))
        sigma = 1e3 * fileio_voigt_stress(C_bar, eps)
        assert np.linalg.norm(P - sigma) < 1e-3 * np.linalg.norm(sigma)
        # orientation dump exists with one row per node per step
        lines = orient.read_text().strip().splitlines()
        assert len(lines) == 2 + topo.n_nodes

    def test_indeterminate_network_exit_code(self, tmp_path, teacher_ckpt):
        # a zero-stiffness phase makes the interface Jacobian singular
        mat = tmp_path / "void.json"
        fileio.save_material(mat, {"model": "elastic",
                                   "C_GPa": [0.0] * 36})
        F = np.eye(3)
        F[0, 0] = 1.001
        path = tmp_path / "path.json"
        fileio.save_load_path(path, steps=[LoadStep(F, 1.0)])
        hist = tmp_path / "h.csv"
        code = cli.main(["predict", "--checkpoint", str(teacher_ckpt),
                         "--material", str(mat), "--path", str(path),
                         "--out", str(hist), "--max-bisections", "1"])
        assert code == cli.EXIT_NUMERICAL
        assert hist.exists()


def fileio_voigt_stress(C, eps11):
    v = np.zeros(6)
    v[0] = eps11
    s = C @ v
    out = np.zeros((3, 3))
    out[0, 0], out[1, 1], out[2, 2] = s[0], s[1], s[2]
    out[1, 2] = out[2, 1] = s[3]
    out[0, 2] = out[2, 0] = s[4]
    out[0, 1] = out[1, 0] = s[5]
    return out


class TestTextureCommands:
    def test_pole_figure_output(self, tmp_path, teacher_ckpt):
        out = tmp_path / "pf.csv"
        assert cli.main(["texture", "--input", str(teacher_ckpt),
                         "--pole", "111", "--out", str(out)]) == 0
        rows = read_csv_rows(out)
        params, _ = fileio.load_checkpoint(teacher_ckpt)
        assert len(rows) == params.n_nodes * 4  # 8 poles, half kept
        for row in rows:
            assert float(row["x"]) ** 2 + float(row["y"]) ** 2 <= 1 + 1e-9

    def test_compare_identical_inputs_prints_zero(self, tmp_path,
                                                  teacher_ckpt, capsys):
        assert cli.main(["compare-odf", "--a", str(teacher_ckpt),
                         "--b", str(teacher_ckpt), "--grid", "800"]) == 0
        out = capsys.readouterr().out.strip()
        assert float(out) == 0.0

    def test_compare_differs_for_different_inputs(self, tmp_path,
                                                  teacher_ckpt, capsys):
        other = tmp_path / "other.ckpt"
        fileio.save_checkpoint(other,
                               nw.init_parameters(2,
                                                  np.random.default_rng(55)))
        assert cli.main(["compare-odf", "--a", str(other),
                         "--b", str(teacher_ckpt), "--grid", "800"]) == 0
        assert float(capsys.readouterr().out.strip()) > 0


class TestLoadPathFile:
    def test_ramp_expansion(self, tmp_path):
        p = tmp_path / "ramp.json"
        fileio.save_load_path(p, ramp={"component": "21", "rate": 2.0,
                                       "final": 0.1, "steps": 5})
        steps = fileio.load_path_steps(p)
        assert len(steps) == 5
        assert steps[-1].F[1, 0] == pytest.approx(0.1)
        assert steps[0].dt == pytest.approx(0.1 / 2.0 / 5)

    def test_bad_component_rejected(self, tmp_path):
        p = tmp_path / "ramp.json"
        fileio.save_load_path(p, ramp={"component": "44", "rate": 1.0,
                                       "final": 0.1, "steps": 2})
        with pytest.raises(fileio.FormatError):
            fileio.load_path_steps(p)

    def test_version_rejected(self, tmp_path):
        p = tmp_path / "lp.json"
        p.write_text(json.dumps({"format": "matnet-loadpath",
                                 "version": 7, "steps": []}))
        with pytest.raises(fileio.FormatError, match="version"):
            fileio.load_path_steps(p)


class TestMaterialFile:
    def test_two_phase_material_alternates(self, tmp_path):
        p = tmp_path / "m.json"
        fileio.save_material(p, {
            "model": "elastic", "C11_GPa": 191.0, "C12_GPa": 162.0,
            "C44_GPa": 42.2,
            "phase2": {"model": "elastic", "C11_GPa": 50.0,
                       "C12_GPa": 20.0, "C44_GPa": 10.0}})
        topo = nw.build_topology(2)
        laws = fileio.load_material_laws(p, topo)
        assert laws[0].C[0, 0] == pytest.approx(191e3)
        assert laws[1].C[0, 0] == pytest.approx(50e3)
        assert laws[2] is laws[0]

    def test_unknown_model_rejected(self, tmp_path):
        p = tmp_path / "m.json"
        fileio.save_material(p, {"model": "mystery"})
        with pytest.raises(fileio.FormatError, match="unknown material"):
            fileio.load_material_laws(p, nw.build_topology(1))


class TestEndToEndDeterminism:
    def test_full_pipeline_byte_identical(self, tmp_path, teacher_ckpt,
                                          elastic_material):
        outputs = []
        for tag in ("one", "two"):
            d = tmp_path / tag
            d.mkdir()
            data = d / "data.jsonl"
            ckpt = d / "model.ckpt"
            hist = d / "hist.csv"
            cli.main(["gen-data", "--teacher", str(teacher_ckpt),
                      "--samples", "15", "--seed", "3",
                      "--out", str(data)])
            cli.main(["train", "--data", str(data), "--out", str(ckpt),
                      "--depth", "2", "--epochs", "2", "--seed", "8"])
            path = d / "path.json"
            F = np.eye(3)
            F[0, 0] = 1.0001
            fileio.save_load_path(path, steps=[LoadStep(F, 1.0)])
            cli.main(["predict", "--checkpoint", str(ckpt),
                      "--material", str(elastic_material),
                      "--path", str(path), "--out", str(hist)])
            outputs.append((data.read_bytes(), ckpt.read_bytes(),
                            hist.read_bytes()))
        assert outputs[0] == outputs[1]
