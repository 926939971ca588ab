"""End-to-end command tests: exit codes, stream separation, determinism.

Commands run in-process through main() so stdout/stderr can be captured
per invocation; two subprocess tests confirm the installed entry point.
Exit code contract: 0 success, 1 usage error, 2 data error.
"""

import subprocess
import sys

import numpy as np
import pytest

import helpers
from laclip.cli import main
from laclip.dataset import parse_manifest
from laclip.store import StoreHeader, make_record, write_store
from laclip.trainer import ProjectionHead, load_head, save_head

DIM = 6


@pytest.fixture
def corpus(tmp_path, rng):
    """12-item aligned corpus: 8 silk patterns and 4 dunhuang murals.

    Text and image stores share the manifest's id space; each text equals
    its image's global vector, so retrieval is near-perfect by design.
    """
    ids, lines, texts, images = [], [], [], []
    for idx in range(12):
        rid = f"item{idx:03d}"
        ids.append(rid)
        category = "pattern" if idx < 8 else "mural"
        lines.append(helpers.manifest_line(rid, category=category))
        g = rng.normal(size=DIM)
        patches = [g + 0.01 * rng.normal(size=DIM) for _ in range(3)]
        texts.append(make_record(rid, g))
        images.append(make_record(rid, g, patches))
    manifest = tmp_path / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    texts_path = tmp_path / "texts.cemb"
    images_path = tmp_path / "images.cemb"
    write_store(texts, StoreHeader(dim=DIM), texts_path)
    write_store(images, StoreHeader(dim=DIM), images_path)
    gold = tmp_path / "gold.tsv"
    gold.write_text("".join(f"{i}\t{i}\n" for i in ids), encoding="utf-8")
    return {
        "dir": tmp_path,
        "ids": ids,
        "manifest": manifest,
        "texts": texts_path,
        "images": images_path,
        "gold": gold,
    }


class TestValidate:
    def test_summary_output(self, corpus, capsys):
        assert main(["validate", "--manifest", str(corpus["manifest"])]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "total\t12"
        assert out[1] == "count\tdunhuang\tv1\tmural\t4"
        assert out[2] == "count\tsilk\tv1\tpattern\t8"

    def test_strict_stops_with_line_number(self, tmp_path, capsys):
        manifest = tmp_path / "bad.jsonl"
        manifest.write_text(
            helpers.manifest_line("a") + "\nnot json\n" + helpers.manifest_line("b") + "\n",
            encoding="utf-8",
        )
        assert main(["validate", "--manifest", str(manifest)]) == 2
        assert "line 2" in capsys.readouterr().err

    def test_lenient_collects_all_errors(self, tmp_path, capsys):
        manifest = tmp_path / "bad.jsonl"
        manifest.write_text(
            helpers.manifest_line("a") + "\nnot json\n"
            + helpers.manifest_line("a") + "\n",
            encoding="utf-8",
        )
        assert main(["validate", "--manifest", str(manifest), "--lenient"]) == 2
        err = capsys.readouterr().err
        assert "line 2" in err and "line 3" in err
        assert "2 error(s)" in err

    def test_missing_file(self, tmp_path, capsys):
        assert main(["validate", "--manifest", str(tmp_path / "absent.jsonl")]) == 2

    def test_missing_required_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as err:
            main(["validate"])
        assert err.value.code == 1


class TestSplit:
    def test_counts_follow_group_quotas(self, corpus, capsys):
        out_path = corpus["dir"] / "split.jsonl"
        rc = main(["split", "--manifest", str(corpus["manifest"]),
                   "--out", str(out_path)])
        assert rc == 0
        lines = dict(ln.split("\t") for ln in capsys.readouterr().out.splitlines())
        t8, s8, v8 = helpers.oracle_quotas(8)
        t4, s4, v4 = helpers.oracle_quotas(4)
        assert int(lines["train"]) == t8 + t4
        assert int(lines["test"]) == s8 + s4
        assert int(lines["val"]) == v8 + v4
        records = parse_manifest(out_path)
        assert all(r.split is not None for r in records)

    def test_byte_identical_reruns(self, corpus):
        a, b = corpus["dir"] / "a.jsonl", corpus["dir"] / "b.jsonl"
        ta, tb = corpus["dir"] / "a.tsv", corpus["dir"] / "b.tsv"
        for out, tsv in ((a, ta), (b, tb)):
            main(["split", "--manifest", str(corpus["manifest"]), "--seed", "9",
                  "--out", str(out), "--assignments", str(tsv)])
        assert a.read_bytes() == b.read_bytes()
        assert ta.read_bytes() == tb.read_bytes()

    def test_assignments_tsv_sorted(self, corpus):
        tsv = corpus["dir"] / "assign.tsv"
        main(["split", "--manifest", str(corpus["manifest"]),
              "--out", str(corpus["dir"] / "o.jsonl"), "--assignments", str(tsv)])
        rows = [ln.split("\t") for ln in tsv.read_text().splitlines()]
        assert [r[0] for r in rows] == sorted(corpus["ids"])
        assert all(r[1] in ("train", "test", "val") for r in rows)

    def test_bad_manifest_writes_nothing(self, tmp_path, capsys):
        manifest = tmp_path / "bad.jsonl"
        manifest.write_text("garbage\n", encoding="utf-8")
        out_path = tmp_path / "out.jsonl"
        assert main(["split", "--manifest", str(manifest), "--out", str(out_path)]) == 2
        assert not out_path.exists()
        assert list(tmp_path.glob("out.jsonl*")) == []


class TestRetrieve:
    def test_t2i_rank_one_is_pair(self, corpus, capsys):
        rc = main(["retrieve", "--direction", "t2i", "--k", "3",
                   "--texts", str(corpus["texts"]), "--images", str(corpus["images"]),
                   "--query-id", "item004"])
        assert rc == 0
        rows = [ln.split("\t") for ln in capsys.readouterr().out.splitlines()]
        assert len(rows) == 3
        assert rows[0][0] == "1" and rows[0][2] == "item004"
        scores = [float(r[1]) for r in rows]
        assert scores == sorted(scores, reverse=True)

    def test_i2t_direction(self, corpus, capsys):
        rc = main(["retrieve", "--direction", "i2t", "--k", "1", "--mode", "global",
                   "--texts", str(corpus["texts"]), "--images", str(corpus["images"]),
                   "--query-id", "item007"])
        assert rc == 0
        assert capsys.readouterr().out.splitlines()[0].endswith("item007")

    def test_identical_runs_identical_stdout(self, corpus, capsys):
        argv = ["retrieve", "--direction", "t2i", "--k", "12",
                "--texts", str(corpus["texts"]), "--images", str(corpus["images"]),
                "--query-id", "item000"]
        main(argv)
        first = capsys.readouterr().out
        main(argv)
        assert capsys.readouterr().out == first

    def test_unknown_query(self, corpus, capsys):
        rc = main(["retrieve", "--direction", "t2i",
                   "--texts", str(corpus["texts"]), "--images", str(corpus["images"]),
                   "--query-id", "ghost"])
        assert rc == 2
        assert "ghost" in capsys.readouterr().err

    def test_k_exceeds_corpus(self, corpus, capsys):
        argv = ["retrieve", "--direction", "t2i", "--k", "500",
                "--texts", str(corpus["texts"]), "--images", str(corpus["images"]),
                "--query-id", "item000"]
        assert main(argv) == 2
        capsys.readouterr()
        with pytest.warns(UserWarning, match="clamped"):
            assert main(argv + ["--lenient"]) == 0
        assert len(capsys.readouterr().out.splitlines()) == 12

    def test_non_positive_k_is_usage_error(self, corpus):
        with pytest.raises(SystemExit) as err:
            main(["retrieve", "--direction", "t2i", "--k", "0",
                  "--texts", str(corpus["texts"]), "--images", str(corpus["images"]),
                  "--query-id", "item000"])
        assert err.value.code == 1

    def test_unknown_flag_is_usage_error(self, corpus):
        with pytest.raises(SystemExit) as err:
            main(["retrieve", "--sideways"])
        assert err.value.code == 1


class TestEval:
    def run_eval(self, corpus, *extra):
        return main(["eval", "--texts", str(corpus["texts"]),
                     "--images", str(corpus["images"]),
                     "--gold", str(corpus["gold"]), *extra])

    def test_perfect_corpus_reports_hundreds(self, corpus, capsys):
        assert self.run_eval(corpus) == 0
        captured = capsys.readouterr()
        rows = [ln.split("\t") for ln in captured.out.splitlines()]
        assert [r[0] for r in rows] == [
            "t2i_r1", "t2i_r5", "t2i_r10", "i2t_r1", "i2t_r5", "i2t_r10", "mr"]
        assert all(float(r[1]) == 100.0 for r in rows)
        assert "mean recall 100.0" in captured.err

    def test_report_file_matches_stdout(self, corpus, capsys):
        report = corpus["dir"] / "report.tsv"
        assert self.run_eval(corpus, "--report", str(report)) == 0
        assert report.read_text(encoding="utf-8") == capsys.readouterr().out

    def test_pooled_by_category(self, corpus, capsys):
        rc = self.run_eval(corpus, "--pool-by-category",
                           "--manifest", str(corpus["manifest"]))
        assert rc == 0
        rows = dict(ln.split("\t") for ln in capsys.readouterr().out.splitlines())
        assert float(rows["mr"]) == 100.0

    def test_pooled_requires_manifest(self, corpus):
        with pytest.raises(SystemExit) as err:
            self.run_eval(corpus, "--pool-by-category")
        assert err.value.code == 1

    def test_gold_id_missing_from_store(self, corpus, capsys):
        gold = corpus["dir"] / "bad_gold.tsv"
        gold.write_text("ghost\titem000\n", encoding="utf-8")
        rc = main(["eval", "--texts", str(corpus["texts"]),
                   "--images", str(corpus["images"]), "--gold", str(gold)])
        assert rc == 2

    def test_malformed_gold_line(self, corpus, capsys):
        gold = corpus["dir"] / "bad_gold.tsv"
        gold.write_text("only_one_column\n", encoding="utf-8")
        rc = main(["eval", "--texts", str(corpus["texts"]),
                   "--images", str(corpus["images"]), "--gold", str(gold)])
        assert rc == 2
        assert "line 1" in capsys.readouterr().err


class TestTrain:
    def run_train(self, corpus, out, *extra):
        return main(["train", "--texts", str(corpus["texts"]),
                     "--images", str(corpus["images"]),
                     "--manifest", str(corpus["manifest"]),
                     "--batch", "4", "--lr", "1e-3", "--epochs", "2",
                     "--out", str(out), *extra])

    def test_trains_and_reports_history(self, corpus, capsys):
        out = corpus["dir"] / "head.ched"
        assert self.run_train(corpus, out) == 0
        captured = capsys.readouterr()
        assert "assigning with seed" in captured.err
        rows = [ln.split("\t") for ln in captured.out.splitlines()]
        assert [r[0] for r in rows] == ["1", "2"]
        for row in rows:
            float(row[1])
            float(row[2])
        head = load_head(out)
        assert head.dim == DIM

    def test_no_validation_split(self, corpus, capsys):
        out = corpus["dir"] / "head.ched"
        assert self.run_train(corpus, out, "--val-split", "none") == 0
        rows = [ln.split("\t") for ln in capsys.readouterr().out.splitlines()]
        assert all(r[2] == "" for r in rows)

    def test_byte_identical_reruns(self, corpus, capsys):
        a, b = corpus["dir"] / "a.ched", corpus["dir"] / "b.ched"
        assert self.run_train(corpus, a) == 0
        assert self.run_train(corpus, b) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_epochs_saves_identity(self, corpus, capsys):
        out = corpus["dir"] / "head.ched"
        assert self.run_train(corpus, out, "--epochs", "0") == 0
        assert capsys.readouterr().out == ""
        head = load_head(out)
        np.testing.assert_array_equal(head.w_text, np.eye(DIM))

    def test_batch_below_two_is_data_error(self, corpus, capsys):
        assert self.run_train(corpus, corpus["dir"] / "h.ched", "--batch", "1") == 2

    def test_negative_lr_is_usage_error(self, corpus):
        with pytest.raises(SystemExit) as err:
            self.run_train(corpus, corpus["dir"] / "h.ched", "--lr", "-1")
        assert err.value.code == 1


class TestInspectWeights:
    def test_prints_normalized_weights(self, corpus, capsys):
        rc = main(["inspect-weights", "--images", str(corpus["images"]),
                   "--image-id", "item003"])
        assert rc == 0
        captured = capsys.readouterr()
        rows = [ln.split("\t") for ln in captured.out.splitlines()]
        assert [r[0] for r in rows] == ["0", "1", "2"]
        assert sum(float(r[1]) for r in rows) == pytest.approx(1.0, abs=1e-12)
        assert "3 patches" in captured.err

    def test_unknown_image(self, corpus, capsys):
        rc = main(["inspect-weights", "--images", str(corpus["images"]),
                   "--image-id", "ghost"])
        assert rc == 2


class TestMrCheck:
    def test_bundled_rows_pass(self, capsys):
        assert main(["mr-check"]) == 0
        captured = capsys.readouterr()
        rows = captured.out.splitlines()
        assert len(rows) == 14
        assert all(r.startswith("ok\t") for r in rows)
        assert "14/14 rows consistent" in captured.err

    def test_tight_slack_fails_boundary_rows(self, capsys):
        assert main(["mr-check", "--slack", "0.04"]) == 2
        assert any(r.startswith("FAIL\t") for r in capsys.readouterr().out.splitlines())

    def test_custom_fixture_file(self, tmp_path, capsys):
        path = tmp_path / "rows.tsv"
        header = "\t".join(["setting", "model", "t2i_r1", "t2i_r5", "t2i_r10",
                            "i2t_r1", "i2t_r5", "i2t_r10", "mr"])
        path.write_text(header + "\nzero_shot\tm\t1\t2\t3\t4\t5\t6\t3.5\n", encoding="utf-8")
        assert main(["mr-check", "--fixtures", str(path)]) == 0

    def test_malformed_fixture_file(self, tmp_path, capsys):
        path = tmp_path / "rows.tsv"
        path.write_text("wrong\theader\n", encoding="utf-8")
        assert main(["mr-check", "--fixtures", str(path)]) == 2


class TestApplyHead:
    def test_projects_store(self, corpus, capsys):
        head_path = corpus["dir"] / "head.ched"
        save_head(ProjectionHead.identity(DIM), head_path)
        out_path = corpus["dir"] / "projected.cemb"
        rc = main(["apply-head", "--head", str(head_path), "--in", str(corpus["images"]),
                   "--out", str(out_path), "--modality", "image"])
        assert rc == 0
        name, size = capsys.readouterr().out.strip().split("\t")
        assert name == str(out_path)
        assert int(size) == out_path.stat().st_size

    def test_corrupt_head_file(self, corpus, capsys):
        head_path = corpus["dir"] / "head.ched"
        head_path.write_bytes(b"not a head")
        rc = main(["apply-head", "--head", str(head_path), "--in", str(corpus["images"]),
                   "--out", str(corpus["dir"] / "o.cemb"), "--modality", "image"])
        assert rc == 2

    def test_bad_modality_is_usage_error(self, corpus):
        with pytest.raises(SystemExit) as err:
            main(["apply-head", "--head", "x", "--in", "y", "--out", "z",
                  "--modality", "audio"])
        assert err.value.code == 1


class TestEntryPoint:
    def test_installed_script_help(self):
        proc = subprocess.run(["laclip", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "validate" in proc.stdout and "mr-check" in proc.stdout

    def test_module_invocation_no_args(self):
        proc = subprocess.run([sys.executable, "-m", "laclip.cli"],
                              capture_output=True, text=True)
        assert proc.returncode == 1
