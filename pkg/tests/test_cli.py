import json

import numpy as np
import pytest

from mgquant.cli import main
from mgquant.tensorfile import read_tensor_file, write_tensor_file


def make_instance(tmp_path, seed=0, d_row=24, d_col=16, rows=96, n_layers=2):
    """Layer weight files, per-layer calib files, and a run config on disk."""
    rng = np.random.default_rng(seed)
    wdir = tmp_path / "weights"
    hdir = tmp_path / "hessians"
    wdir.mkdir()
    hdir.mkdir()
    calib_paths = []
    for i in range(n_layers):
        w = (0.01 * rng.standard_normal((d_row, d_col))).astype(np.float32)
        write_tensor_file(wdir / f"L{i}.mgqt", {"weights": w})
        x = (0.05 * rng.standard_normal((rows, d_col))).astype(np.float32)
        cpath = tmp_path / f"calib{i}.mgqt"
        write_tensor_file(cpath, {"batch0": x[: rows // 2], "batch1": x[rows // 2:]})
        calib_paths.append(cpath)
        gram = tmp_path / f"gram{i}.mgqt"
        assert main(["gram", "--calib", str(cpath), "--out", str(gram)]) == 0
        assert main(["hessian", "--gram", str(gram), "--damp", "0.01",
                     "--out", str(hdir / f"L{i}.mgqt")]) == 0
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "epochs": 2, "lr": 0.01, "accum_steps": 2, "d_gnn": 8, "hidden": 8,
        "block_size": 8, "seed": 5, "target_bits": 2.5,
    }))
    return wdir, hdir, calib_paths, cfg


def last_json_line(capsys):
    out = capsys.readouterr().out.strip().split("\n")
    return json.loads(out[-1])


class TestGram:
    def test_identity_batch(self, tmp_path, capsys):
        calib = tmp_path / "c.mgqt"
        write_tensor_file(calib, {"batch0": np.eye(2, dtype=np.float64)})
        out = tmp_path / "g.mgqt"
        assert main(["gram", "--calib", str(calib), "--out", str(out)]) == 0
        sections = read_tensor_file(out)
        assert np.array_equal(sections["gram"], 2.0 * np.eye(2))
        assert sections["samples"][0] == 2.0
        payload = last_json_line(capsys)
        assert payload["d_col"] == 2 and payload["samples"] == 2

    def test_two_files_vs_concatenated_byte_identical(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((300, 6))
        a, b, whole = (tmp_path / n for n in ("a.mgqt", "b.mgqt", "w.mgqt"))
        write_tensor_file(a, {"x": x[:137]})
        write_tensor_file(b, {"x": x[137:]})
        write_tensor_file(whole, {"x": x})
        g1, g2 = tmp_path / "g1.mgqt", tmp_path / "g2.mgqt"
        assert main(["gram", "--calib", str(a), str(b), "--out", str(g1)]) == 0
        assert main(["gram", "--calib", str(whole), "--out", str(g2)]) == 0
        assert g1.read_bytes() == g2.read_bytes()

    def test_shape_mismatch_exit_2_names_file(self, tmp_path, capsys):
        a, b = tmp_path / "a.mgqt", tmp_path / "b.mgqt"
        write_tensor_file(a, {"x": np.zeros((3, 4))})
        write_tensor_file(b, {"x": np.zeros((3, 5))})
        rc = main(["gram", "--calib", str(a), str(b), "--out", str(tmp_path / "g.mgqt")])
        assert rc == 2
        assert "b.mgqt" in capsys.readouterr().err

    def test_no_files_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["gram", "--calib", "--out", str(tmp_path / "g.mgqt")])
        assert exc.value.code == 2

    def test_malformed_file_exit_3(self, tmp_path, capsys):
        bad = tmp_path / "bad.mgqt"
        bad.write_bytes(b"JUNKJUNKJUNK")
        rc = main(["gram", "--calib", str(bad), "--out", str(tmp_path / "g.mgqt")])
        assert rc == 3


class TestHessian:
    def test_wraps_builder(self, tmp_path):
        calib = tmp_path / "c.mgqt"
        write_tensor_file(calib, {"x": np.eye(2)})
        gram = tmp_path / "g.mgqt"
        main(["gram", "--calib", str(calib), "--out", str(gram)])
        out = tmp_path / "h.mgqt"
        assert main(["hessian", "--gram", str(gram), "--damp", "0.0", "--out", str(out)]) == 0
        hc = read_tensor_file(out)["hessian_cholesky"]
        assert np.allclose(hc, 0.70710678 * np.eye(2), atol=1e-8)

    def test_diagonal_gram_file_level(self, tmp_path):
        gram = tmp_path / "g.mgqt"
        write_tensor_file(gram, {"gram": np.diag([2.0, 8.0]), "samples": np.array([4.0])})
        out = tmp_path / "h.mgqt"
        assert main(["hessian", "--gram", str(gram), "--damp", "0.0", "--out", str(out)]) == 0
        hc = read_tensor_file(out)["hessian_cholesky"]
        assert np.allclose(np.diag(hc), [1 / np.sqrt(2.0), 1 / np.sqrt(8.0)])

    def test_indefinite_gram_exit_4(self, tmp_path, capsys):
        gram = tmp_path / "g.mgqt"
        write_tensor_file(gram, {"gram": np.diag([1.0, -4.0]), "samples": np.array([2.0])})
        rc = main(["hessian", "--gram", str(gram), "--damp", "0.0",
                   "--out", str(tmp_path / "h.mgqt")])
        assert rc == 4
        assert "damp_frac" in capsys.readouterr().err

    def test_missing_section_exit_2(self, tmp_path, capsys):
        gram = tmp_path / "g.mgqt"
        write_tensor_file(gram, {"gram": np.eye(2)})
        rc = main(["hessian", "--gram", str(gram), "--out", str(tmp_path / "h.mgqt")])
        assert rc == 2
        assert "samples" in capsys.readouterr().err


class TestTrainCli:
    def test_end_to_end_and_determinism(self, tmp_path, capsys):
        wdir, hdir, calibs, cfg = make_instance(tmp_path)
        p1, p2 = tmp_path / "p1.mgqt", tmp_path / "p2.mgqt"
        rc = main(["train", "--weights", str(wdir), "--hessians", str(hdir),
                   "--config", str(cfg), "--out", str(p1)])
        assert rc == 0
        payload = last_json_line(capsys)
        assert {"l_quant", "l_bit", "total", "hard_mean_bits", "soft_mean_bits"} <= set(payload)
        rc = main(["train", "--weights", str(wdir), "--hessians", str(hdir),
                   "--config", str(cfg), "--out", str(p2)])
        assert rc == 0
        assert p1.read_bytes() == p2.read_bytes()
        log1 = (tmp_path / "p1.mgqt.log").read_text()
        log2 = (tmp_path / "p2.mgqt.log").read_text()
        assert log1 == log2
        assert log1.startswith("epoch\tlayer\t")
        sections = read_tensor_file(p1)
        assert {"w0", "w1", "wc", "bc", "flags"} <= set(sections)

    def test_epochs_zero_writes_initialized_params(self, tmp_path, capsys):
        wdir, hdir, calibs, _ = make_instance(tmp_path, seed=2)
        cfg = tmp_path / "cfg0.json"
        cfg.write_text(json.dumps({"epochs": 0, "d_gnn": 8, "hidden": 8, "block_size": 8}))
        out = tmp_path / "p.mgqt"
        assert main(["train", "--weights", str(wdir), "--hessians", str(hdir),
                     "--config", str(cfg), "--out", str(out)]) == 0
        payload = last_json_line(capsys)
        assert payload["l_quant"] is None
        log = (tmp_path / "p.mgqt.log").read_text()
        assert log.strip() == "epoch\tlayer\tl_quant\tl_bit\ttotal\thard_mean_bits\tsoft_mean_bits"

    def test_unpaired_files_exit_2(self, tmp_path, capsys):
        wdir, hdir, _, cfg = make_instance(tmp_path, seed=3)
        (hdir / "L1.mgqt").unlink()
        rc = main(["train", "--weights", str(wdir), "--hessians", str(hdir),
                   "--config", str(cfg), "--out", str(tmp_path / "p.mgqt")])
        assert rc == 2
        assert "unpaired" in capsys.readouterr().err


class TestQuantizeCli:
    def make_trained(self, tmp_path, capsys):
        wdir, hdir, calibs, cfg = make_instance(tmp_path)
        params = tmp_path / "params.mgqt"
        assert main(["train", "--weights", str(wdir), "--hessians", str(hdir),
                     "--config", str(cfg), "--out", str(params)]) == 0
        capsys.readouterr()
        return wdir, hdir, calibs, params

    def test_quantize_outputs_and_determinism(self, tmp_path, capsys):
        wdir, hdir, calibs, params = self.make_trained(tmp_path, capsys)
        outs, reports = [], []
        for i in (1, 2):
            out = tmp_path / f"q{i}.mgqt"
            rep = tmp_path / f"r{i}.json"
            rc = main(["quantize", "--weights", str(wdir / "L0.mgqt"),
                       "--hessian", str(hdir / "L0.mgqt"), "--params", str(params),
                       "--block", "8", "--calib", str(calibs[0]),
                       "--out", str(out), "--report", str(rep)])
            assert rc == 0
            outs.append(out.read_bytes())
            r = json.loads(rep.read_text())
            r.pop("timing")
            reports.append(r)
        assert outs[0] == outs[1]
        assert reports[0] == reports[1]

        sections = read_tensor_file(tmp_path / "q1.mgqt")
        assert {"quantized", "codes", "scales", "zeros", "widths"} <= set(sections)
        assert sections["codes"].dtype == np.uint8
        assert sections["widths"].dtype == np.uint8
        # dequantized section lies exactly on the stored grids
        deq = sections["scales"][None, :] * (
            sections["codes"].astype(np.float64) - sections["zeros"][None, :]
        )
        assert np.allclose(sections["quantized"], deq, atol=1e-6)
        payload = last_json_line(capsys)
        assert payload["proxy_loss"] is not None

    def test_representable_fixture_zero_proxy_and_identity_oracle(self, tmp_path, capsys):
        # allocator parameters pinned so every column gets 3 bits; weights
        # constructed exactly on 3-bit grids; identity hessian
        from mgquant.quant import quantize_column

        rng = np.random.default_rng(6)
        d_row, d_col = 16, 10
        codes = rng.integers(0, 8, size=(d_row, d_col))
        codes[0, :] = 0
        codes[1, :] = 7
        w = (0.25 * codes).astype(np.float64)
        wpath, hpath, cpath, ppath = (
            tmp_path / n for n in ("w.mgqt", "h.mgqt", "c.mgqt", "p.mgqt")
        )
        write_tensor_file(wpath, {"weights": w})
        write_tensor_file(hpath, {"hessian_cholesky": np.eye(d_col)})
        write_tensor_file(cpath, {"x": np.eye(d_col)})
        write_tensor_file(ppath, {
            "w0": np.zeros((8, 8)), "w1": np.zeros((8, 8)),
            "wc": np.zeros((8, 4)), "bc": np.array([0.0, 0.0, 10.0, 0.0]),
        })
        rep = tmp_path / "rep.json"
        out = tmp_path / "q.mgqt"
        rc = main(["quantize", "--weights", str(wpath), "--hessian", str(hpath),
                   "--params", str(ppath), "--block", "4", "--precision", "f64",
                   "--calib", str(cpath), "--out", str(out), "--report", str(rep)])
        assert rc == 0
        report = json.loads(rep.read_text())
        assert report["layers"][0]["proxy_loss"] == 0.0
        assert report["layers"][0]["bit_histogram"] == [0, 0, d_col, 0]
        sections = read_tensor_file(out)
        assert np.array_equal(sections["quantized"], w)
        # identity hessian: output equals the per-column quantization oracle
        for j in range(d_col):
            oracle = quantize_column(w[:, j], 3).dequant()
            assert np.array_equal(sections["quantized"][:, j], oracle)

    def test_report_has_both_timings(self, tmp_path, capsys):
        wdir, hdir, calibs, params = self.make_trained(tmp_path, capsys)
        rep = tmp_path / "r.json"
        assert main(["quantize", "--weights", str(wdir / "L0.mgqt"),
                     "--hessian", str(hdir / "L0.mgqt"), "--params", str(params),
                     "--block", "8", "--out", str(tmp_path / "q.mgqt"),
                     "--report", str(rep)]) == 0
        timing = json.loads(rep.read_text())["timing"]["layers"][0]
        assert "allocator_time" in timing and "engine_time" in timing


class TestBaselineCli:
    def test_rtn_and_uniform(self, tmp_path, capsys):
        wdir, hdir, calibs, cfg = make_instance(tmp_path, seed=4)
        for method in ("rtn", "gptq-uniform"):
            rep = tmp_path / f"{method}.json"
            rc = main(["baseline", "--method", method, "--bits", "2",
                       "--weights", str(wdir / "L0.mgqt"), "--hessian", str(hdir / "L0.mgqt"),
                       "--calib", str(calibs[0]), "--config", str(cfg),
                       "--out", str(tmp_path / f"{method}.mgqt"), "--report", str(rep)])
            assert rc == 0
            payload = last_json_line(capsys)
            assert payload["method"] == method
            assert payload["mean_bits"] == 2.0
            report = json.loads(rep.read_text())
            assert report["config"]["method"] == method

    def test_unknown_method_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["baseline", "--method", "awq", "--weights", "w", "--hessian", "h"])
        assert exc.value.code == 2


class TestEvalCli:
    def test_hand_computed_proxy(self, tmp_path, capsys):
        orig, quant, calib = (tmp_path / n for n in ("o.mgqt", "q.mgqt", "c.mgqt"))
        write_tensor_file(orig, {"weights": np.array([[1.0, 2.0], [3.0, 4.0]])})
        write_tensor_file(quant, {"quantized": np.array([[0.5, 2.0], [3.0, 4.0]])})
        write_tensor_file(calib, {"x": np.eye(2)})
        rc = main(["eval", "--orig", str(orig), "--quant", str(quant),
                   "--calib", str(calib), "--report", str(tmp_path / "r.json")])
        assert rc == 0
        payload = last_json_line(capsys)
        assert payload["proxy_loss"] == pytest.approx(0.125, abs=1e-12)
        assert payload["max_abs_error"] == pytest.approx(0.5)

    def test_identical_files_zero_loss(self, tmp_path, capsys):
        orig, quant, calib = (tmp_path / n for n in ("o.mgqt", "q.mgqt", "c.mgqt"))
        w = np.random.default_rng(0).standard_normal((3, 4))
        write_tensor_file(orig, {"weights": w})
        write_tensor_file(quant, {"quantized": w})
        write_tensor_file(calib, {"x": np.eye(4)})
        assert main(["eval", "--orig", str(orig), "--quant", str(quant),
                     "--calib", str(calib)]) == 0
        assert last_json_line(capsys)["proxy_loss"] == 0.0

    def test_missing_calib_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["eval", "--orig", "a", "--quant", "b"])
        assert exc.value.code == 2

    def test_shape_mismatch_exit_2(self, tmp_path, capsys):
        orig, quant, calib = (tmp_path / n for n in ("o.mgqt", "q.mgqt", "c.mgqt"))
        write_tensor_file(orig, {"weights": np.zeros((2, 3))})
        write_tensor_file(quant, {"quantized": np.zeros((2, 4))})
        write_tensor_file(calib, {"x": np.eye(3)})
        rc = main(["eval", "--orig", str(orig), "--quant", str(quant), "--calib", str(calib)])
        assert rc == 2
