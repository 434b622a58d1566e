import io
import os
import json
import shlex
import tempfile
from mock import patch

import numpy as np

from otalign.constants import Variant, Metric
from otalign.constraints import ConstraintSpec
from otalign.documentation import format_default_metrics
from otalign.exceptions import InvalidParameter, ShapeError, BoundError, FormatError
from otalign.transport import SolverConfig
from otalign.wrapper import gen_report, get_config_from_args, get_parser, cmd
from otalign.tests.testing_utilities import AlignTests
from otalign import presets

from contextlib import contextmanager, redirect_stdout
from os import devnull

PRESET_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "presets")


@contextmanager
def hide_cmd_output():
    with open(devnull, "w") as gobble:
        with redirect_stdout(gobble) as out:
            yield out


class CliTests(AlignTests):
    def config_from_line(self, line, preset=False):
        parser = get_parser()
        args = parser.parse_args(shlex.split(line))
        if preset:
            return get_config_from_args(args, default_params=vars(parser.parse_args([])))
        return get_config_from_args(args)

    def assertExitCode(self, line, code):
        with hide_cmd_output(), patch("sys.stderr", new_callable=io.StringIO):
            with self.assertRaises(SystemExit) as cm:
                cmd(cmd_line=line)
        self.assertEqual(cm.exception.code, code)

    @property
    def embeddings(self):
        return self.data("embeddings.txt")


class CliEquivalenceTests(CliTests):
    def test_align(self):
        line = f"align {self.data('doc_a.txt')} {self.data('doc_b.txt')} -e {self.embeddings} --variant 1:k --k 1"
        config = self.config_from_line(line)

        self.assertEqual(config.command, "align")
        self.assertEqual(config.inputs, [self.data("doc_a.txt"), self.data("doc_b.txt")])
        self.assertEqual(config.spec, ConstraintSpec(Variant.ONE_TO_K, 1))
        self.assertEqual(config.metric, Metric.COSINE_DISTANCE)
        self.assertEqual(config.solver, SolverConfig())

    def test_variant_synonyms(self):
        base = f"align {self.data('doc_a.txt')} {self.data('doc_b.txt')} -e {self.embeddings}"
        for variant, expected in [
            ("'Exact-k assignment'", Variant.EXACT_K),
            ("exact-k", Variant.EXACT_K),
            ("relaxed", Variant.RELAXED_ONE_TO_K),
            ("ot", Variant.VANILLA),
            ("one_to_k", Variant.ONE_TO_K),
        ]:
            config = self.config_from_line(f"{base} --variant {variant}")
            self.assertEqual(config.spec.variant, expected)

    def test_default_metric(self):
        base = f"align {self.data('doc_a.txt')} {self.data('doc_b.txt')} -e {self.embeddings}"
        self.assertEqual(
            self.config_from_line(f"{base} --variant relaxed").metric, Metric.NEGATIVE_COSINE
        )
        self.assertEqual(
            self.config_from_line(f"{base} --variant relaxed --metric cos").metric,
            Metric.COSINE_DISTANCE,
        )

    def test_default_variant(self):
        config = self.config_from_line(
            f"align {self.data('doc_a.txt')} {self.data('doc_b.txt')} -e {self.embeddings}"
        )
        self.assertEqual(config.spec, ConstraintSpec(Variant.EXACT_K, 2))

    def test_synth_default_k(self):
        config = self.config_from_line("synth --variant exact")
        self.assertEqual(config.spec.k, 4)
        self.assertEqual((config.rows, config.cols), (30, 20))

    def test_solver_flags(self):
        config = self.config_from_line(
            "verify --epsilon-final 1e-3 --max-iter 50 --linear-domain --trials 4"
        )
        self.assertEqual(
            config.solver,
            SolverConfig(epsilon_final=1e-3, max_iterations_per_epsilon=50, log_domain=False),
        )
        self.assertEqual(config.trials, 4)

    def test_solver_file(self):
        config = self.config_from_line(f"verify --config {self.data('solver.json')}")
        self.assertEqual(config.solver.epsilon_final, 1e-3)
        self.assertEqual(config.solver.max_iterations_per_epsilon, 300)

    def test_solver_file_overridden(self):
        config = self.config_from_line(
            f"verify --config {self.data('solver.json')} --max-iter 20"
        )
        self.assertEqual(config.solver.epsilon_final, 1e-3)
        self.assertEqual(config.solver.max_iterations_per_epsilon, 20)

    def test_solver_file_not_object(self):
        with self.assertRaises(FormatError):
            self.config_from_line(f"verify --config {self.data('manifest.json')}")

    def test_delta_grid(self):
        config = self.config_from_line(
            f"rationale {self.data('alignment.json')} -g {self.data('gold.json')} --delta-grid 0.1 0.2"
        )
        self.assertEqual(config.delta_grid, [0.1, 0.2])
        self.assertIsNone(config.delta)

    def test_svg_path(self):
        config = self.config_from_line("synth -o out/report.json --heatmap SVG")
        self.assertEqual(config.heatmap, "svg")
        self.assertEqual(config.svg_path(), os.path.join("out", "report.svg"))
        self.assertEqual(self.config_from_line("synth").svg_path(), "synth.svg")


class CliInvalidTests(CliTests):
    def test_no_command(self):
        with self.assertRaises(InvalidParameter):
            self.config_from_line("")

    def test_unknown_command(self):
        with self.assertRaises(InvalidParameter):
            self.config_from_line("solve")

    def test_wrong_input_count(self):
        with self.assertRaises(InvalidParameter):
            self.config_from_line(f"align {self.data('doc_a.txt')} -e {self.embeddings}")

    def test_missing_embeddings(self):
        with self.assertRaises(InvalidParameter):
            self.config_from_line(f"align {self.data('doc_a.txt')} {self.data('doc_b.txt')}")

    def test_missing_gold(self):
        with self.assertRaises(InvalidParameter):
            self.config_from_line(f"rationale {self.data('alignment.json')}")

    def test_invalid_k(self):
        with self.assertRaises(BoundError):
            self.config_from_line("synth --k 0")
        with self.assertRaises(InvalidParameter):
            self.config_from_line("synth --k 1.5")

    def test_unknown_variant(self):
        with self.assertRaises(InvalidParameter):
            self.config_from_line("synth --variant many-to-many")

    def test_unknown_metric(self):
        with self.assertRaises(InvalidParameter):
            self.config_from_line("synth --metric manhattan")

    def test_negative_lambda(self):
        with self.assertRaises(InvalidParameter):
            self.config_from_line("synth --lambda -1")

    def test_invalid_heatmap(self):
        with self.assertRaises(InvalidParameter):
            self.config_from_line("synth --heatmap png")

    def test_invalid_solver(self):
        with self.assertRaises(InvalidParameter):
            self.config_from_line("verify --scaling-factor 2")

    def test_invalid_trials(self):
        with self.assertRaises(InvalidParameter):
            self.config_from_line("verify --trials 0")

    def test_negative_seed(self):
        with self.assertRaises(InvalidParameter):
            self.config_from_line("verify --seed -3")

    def test_exit_missing_embeddings(self):
        self.assertExitCode(f"align {self.data('doc_a.txt')} {self.data('doc_b.txt')}", 1)

    def test_exit_empty_manifest(self):
        self.assertExitCode(f"rank {self.data('manifest_empty.json')} -e {self.embeddings}", 1)

    def test_exit_bad_embeddings(self):
        self.assertExitCode(
            f"align {self.data('doc_a.txt')} {self.data('doc_b.txt')} -e {self.data('bad_embeddings.txt')}",
            1,
        )

    def test_exit_undecodable_document(self):
        with tempfile.TemporaryDirectory() as tmp_dir:
            path = os.path.join(tmp_dir, "bad.txt")
            with open(path, "wb") as out:
                out.write(b"\xff\xfe")
            self.assertExitCode(f"align {path} {self.data('doc_b.txt')} -e {self.embeddings}", 1)

    def test_exit_bound(self):
        self.assertExitCode(
            f"align {self.data('doc_a.txt')} {self.data('doc_b.txt')} -e {self.embeddings} --variant exact --k 5",
            1,
        )

    @patch("otalign.wrapper.run_suite")
    def test_exit_failed_verification(self, suite):
        suite.return_value = {
            "seed": 0,
            "trials": 1,
            "passed": False,
            "checks": [{"name": "birkhoff", "trials": 1, "passes": 0, "worst_gap": 1.0}],
        }
        self.assertExitCode("verify --trials 1", 3)


class AlignCommandTests(CliTests):
    def align(self, doc_a, doc_b, **params):
        return gen_report(
            command="align",
            inputs=[self.data(doc_a), self.data(doc_b)],
            embeddings=self.embeddings,
            **params,
        )

    def test_one_to_one(self):
        report = self.align("doc_a.txt", "doc_b.txt", variant="one_to_k", k=1)
        pairs = {(i, j) for i, j, _ in report["active_pairs"]}
        self.assertEqual(pairs, {(0, 1), (1, 2), (2, 0)})
        self.assertEqual(len(report["spans_x"]), 3)
        self.assertEqual(report["metric"], "cosine_distance")
        self.assertEqual(report["oov_spans"], {"x": [], "y": []})
        self.assertAlmostEqual(report["similarity"], 0.0, places=6)
        self.assertIsNone(report["heatmap"])

    def test_exact_k_identical(self):
        report = self.align("doc_a.txt", "doc_a.txt", variant="exact-k", k=2)
        self.assertEqual(len(report["active_pairs"]), 2)
        for i, j, _ in report["active_pairs"]:
            self.assertEqual(i, j)
        self.assertEqual(report["spec"], {"variant": "exact_k", "k": 2})
        self.assertGreaterEqual(report["cost_shift"], 0.0)

    def test_vanilla_sparsity(self):
        report = self.align("doc_a.txt", "doc_c.txt", variant="vanilla")
        self.assertLessEqual(len(report["active_pairs"]), 3 + 2 - 1)
        self.assertEqual(report["rounding"], "vertex")

    def test_report_is_json(self):
        report = self.align("doc_a.txt", "doc_d.txt")
        json.loads(json.dumps(report, allow_nan=False))

    def test_text_heatmap(self):
        report = self.align("doc_a.txt", "doc_b.txt", variant="1:k", k=1, heatmap="text")
        self.assertEqual(len(report["heatmap"]), 3)
        self.assertEqual(sum(line.count("#") for line in report["heatmap"]), 3)

    def test_svg_heatmap(self):
        with tempfile.TemporaryDirectory() as tmp_dir:
            output = os.path.join(tmp_dir, "report.json")
            report = self.align("doc_a.txt", "doc_b.txt", heatmap="svg", output=output)
            self.assertEqual(report["heatmap"], os.path.join(tmp_dir, "report.svg"))
            self.assertTrue(os.path.isfile(report["heatmap"]))

    @patch("otalign.wrapper.warn")
    def test_oov_document(self, warn_fn):
        report = self.align("doc_oov.txt", "doc_a.txt", variant="vanilla")
        self.assertEqual(report["oov_spans"]["x"], [0, 1])
        self.assertTrue(warn_fn.called)

    def test_output_file(self):
        with tempfile.TemporaryDirectory() as tmp_dir, hide_cmd_output():
            output = os.path.join(tmp_dir, "align.json")
            cmd(
                cmd_line=f"align {self.data('doc_a.txt')} {self.data('doc_b.txt')} "
                f"-e {self.embeddings} --variant 1k --k 1 -o {output}"
            )
            with open(output) as f:
                report = json.load(f)
        self.assertEqual(len(report["active_pairs"]), 3)


class RankCommandTests(CliTests):
    def test_rank(self):
        report = gen_report(
            command="rank", inputs=[self.data("manifest.json")], embeddings=self.embeddings
        )
        self.assertEqual(report["metrics"]["p_at_1"], 1.0)
        self.assertEqual(report["metrics"]["map"], 1.0)
        self.assertEqual(report["metrics"]["auc"], 1.0)
        self.assertEqual(report["failures"], [])
        self.assertEqual(report["sparsity"]["mean_active_count"], 2.0)

        candidates = report["queries"][0]["candidates"]
        self.assertEqual([c["path"] for c in candidates], ["doc_c.txt", "doc_b.txt", "doc_d.txt"])
        best = max(candidates, key=lambda c: c["score"])
        self.assertEqual(best["path"], "doc_b.txt")

    @patch("otalign.metrics.warn")
    def test_no_relevant(self, warn_fn):
        report = gen_report(
            command="rank",
            inputs=[self.data("manifest_no_relevant.json")],
            embeddings=self.embeddings,
        )
        self.assertEqual(report["metrics"]["evaluated_queries"], 1)
        self.assertEqual(report["metrics"]["skipped_queries"], ["doc_c.txt"])
        self.assertIn("doc_c.txt: no relevant candidate", report["warnings"])

    @patch("otalign.wrapper.warn")
    def test_failed_pairs_recorded(self, warn_fn):
        # The test vectors are nonnegative: negative cosine costs never exceed 0
        report = gen_report(
            command="rank",
            inputs=[self.data("manifest.json")],
            embeddings=self.embeddings,
            variant="relaxed",
            k=1,
        )
        self.assertEqual(report["metric"], "negative_cosine")
        self.assertEqual(report["spec"], {"variant": "relaxed_one_to_k", "k": 1})
        self.assertEqual(len(report["failures"]), 3)
        self.assertIsNone(report["metrics"]["p_at_1"])
        self.assertIn("doc_a.txt: no candidate could be scored", report["warnings"])
        self.assertTrue(warn_fn.called)

    @patch("otalign.wrapper.warn")
    def test_unreadable_candidate(self, warn_fn):
        report = gen_report(
            command="rank", inputs=[self.data("manifest_missing.json")], embeddings=self.embeddings
        )
        self.assertEqual(len(report["failures"]), 1)
        self.assertEqual(report["failures"][0]["candidate"], "missing.txt")
        self.assertIn("missing.txt", report["failures"][0]["error"])
        self.assertEqual(report["metrics"]["p_at_1"], 1.0)
        self.assertEqual(report["metrics"]["evaluated_queries"], 1)

        candidates = report["queries"][0]["candidates"]
        self.assertIsNotNone(candidates[0]["score"])
        self.assertIsNone(candidates[1]["score"])

    @patch("otalign.wrapper.warn")
    def test_undecodable_candidate(self, warn_fn):
        with tempfile.TemporaryDirectory() as tmp_dir:
            with open(os.path.join(tmp_dir, "bad.txt"), "wb") as out:
                out.write(b"\xff\xfe Not text.")
            path = os.path.join(tmp_dir, "manifest.json")
            with open(path, "w") as out:
                json.dump(
                    [
                        {
                            "query": self.data("doc_a.txt"),
                            "candidates": [
                                {"path": self.data("doc_b.txt"), "relevant": True},
                                {"path": "bad.txt", "relevant": False},
                            ],
                        }
                    ],
                    out,
                )
            report = gen_report(command="rank", inputs=[path], embeddings=self.embeddings)

        self.assertEqual(len(report["failures"]), 1)
        self.assertIn("UTF-8", report["failures"][0]["error"])
        self.assertEqual(report["metrics"]["p_at_1"], 1.0)

    def test_malformed_manifest(self):
        with tempfile.TemporaryDirectory() as tmp_dir:
            path = os.path.join(tmp_dir, "manifest.json")
            with open(path, "w") as out:
                json.dump([{"query": "a.txt"}], out)
            with self.assertRaises(FormatError):
                gen_report(command="rank", inputs=[path], embeddings=self.embeddings)


class RationaleCommandTests(CliTests):
    def rationale(self, **params):
        return gen_report(
            command="rationale",
            inputs=[self.data("alignment.json")],
            gold=self.data("gold.json"),
            **params,
        )

    def test_select(self):
        report = self.rationale(delta_grid=["0.1", "0.25", "0.6"])
        self.assertEqual(report["delta"], 0.25)
        self.assertTrue(report["selected"])
        self.assertEqual(report["grid"], [0.1, 0.25, 0.6])
        self.assertEqual(report["mean_f1"], 1.0)
        self.assertEqual(report["pairs"][0]["rationales"], {"x": [1, 1], "y": [1, 1, 0]})

    def test_fixed_delta(self):
        report = self.rationale(delta="0.1")
        pair = report["pairs"][0]
        self.assertFalse(report["selected"])
        self.assertIsNone(report["grid"])
        self.assertEqual(pair["f1_x"], 1.0)
        self.assertAlmostEqual(pair["f1_y"], 0.8)
        self.assertAlmostEqual(pair["f1"], 0.9)
        self.assertTrue(np.isfinite(pair["cross_entropy"]))

    def test_large_delta(self):
        report = self.rationale(delta=0.6)
        self.assertEqual(report["mean_f1"], 0.0)

    def test_default_grid(self):
        report = self.rationale()
        self.assertEqual(len(report["grid"]), 20)
        # No grid value falls between the 0.2 and 0.3 entries of the plan
        self.assertEqual(report["delta"], report["grid"][0])
        self.assertAlmostEqual(report["mean_f1"], 0.9)

    def test_gold_shape(self):
        with tempfile.TemporaryDirectory() as tmp_dir:
            path = os.path.join(tmp_dir, "gold.json")
            with open(path, "w") as out:
                json.dump({"x": [1, 0, 1], "y": [1, 1, 0]}, out)
            with self.assertRaises(ShapeError):
                gen_report(
                    command="rationale",
                    inputs=[self.data("alignment.json")],
                    gold=path,
                    delta=0.1,
                )

    def test_from_align_report(self):
        with tempfile.TemporaryDirectory() as tmp_dir, hide_cmd_output():
            alignment = os.path.join(tmp_dir, "align.json")
            gold = os.path.join(tmp_dir, "gold.json")
            output = os.path.join(tmp_dir, "rationale.json")
            with open(gold, "w") as out:
                json.dump({"x": [1, 1, 1], "y": [1, 1, 1]}, out)

            cmd(
                cmd_line=f"align {self.data('doc_a.txt')} {self.data('doc_b.txt')} "
                f"-e {self.embeddings} --variant 1k --k 1 -o {alignment}"
            )
            cmd(cmd_line=f"rationale {alignment} -g {gold} --delta 0.01 -o {output}")
            with open(output) as f:
                report = json.load(f)
        self.assertEqual(report["mean_f1"], 1.0)


class SynthCommandTests(CliTests):
    def test_synth(self):
        report = gen_report(command="synth")
        self.assertEqual((report["rows"], report["cols"], report["k"]), (30, 20, 4))
        self.assertEqual(len(report["band"]), 15)

        variants = report["variants"]
        self.assertEqual(variants["exact_k"]["active_count"], 4)
        self.assertLess(variants["relaxed_one_to_k"]["active_count"], 20)
        self.assertLessEqual(variants["vanilla"]["active_count"], 30 + 20 - 1)
        for result in variants.values():
            self.assertTrue(result["satisfies_sparsity"])

    def test_synth_seed(self):
        first = gen_report(command="synth", rows=6, cols=4, seed=3)
        second = gen_report(command="synth", rows=6, cols=4, seed=3)
        self.assertEqual(first, second)

    def test_synth_text_heatmap(self):
        report = gen_report(command="synth", rows=6, cols=4, k=2, heatmap="text")
        heatmap = report["variants"]["exact_k"]["heatmap"]
        self.assertEqual(len(heatmap), 6)
        self.assertEqual(sum(line.count("#") for line in heatmap), 2)


class VerifyCommandTests(CliTests):
    def test_verify(self):
        report = gen_report(command="verify", trials=10, seed=2)
        self.assertEqual(report["trials"], 10)
        self.assertEqual(len(report["checks"]), 10)
        self.assertTrue(report["passed"])

    def test_verify_cmd(self):
        with hide_cmd_output():
            cmd(cmd_line="verify --trials 5")


class CliPresetTests(CliTests):
    def test_load_preset(self):
        presets.data_dir = PRESET_DIR
        config = self.config_from_line(
            f"align {self.data('doc_a.txt')} {self.data('doc_b.txt')} -e {self.embeddings} --preset strict",
            preset=True,
        )
        self.assertEqual(config.spec, ConstraintSpec(Variant.ONE_TO_K, 1))
        self.assertEqual(config.solver.epsilon_final, 1e-3)

    def test_preset_overridden(self):
        presets.data_dir = PRESET_DIR
        config = self.config_from_line("synth --preset strict --k 2", preset=True)
        self.assertEqual(config.spec, ConstraintSpec(Variant.ONE_TO_K, 2))

    @patch("otalign.presets.warn")
    def test_broken_preset(self, warn_fn):
        presets.data_dir = PRESET_DIR
        config = self.config_from_line("synth --preset broken", preset=True)
        self.assertEqual(config.spec.variant, Variant.EXACT_K)
        self.assertTrue(warn_fn.called)

    def test_list_presets(self):
        presets.data_dir = PRESET_DIR
        with redirect_stdout(io.StringIO()) as out:
            cmd(cmd_line="--preset")
        self.assertIn("strict", out.getvalue())
        self.assertIn("broken", out.getvalue())

    def test_unknown_preset(self):
        presets.data_dir = PRESET_DIR
        with redirect_stdout(io.StringIO()) as out:
            cmd(cmd_line="synth --preset nothing")
        self.assertIn("Unknown preset", out.getvalue())

    def test_create_preset(self):
        with tempfile.TemporaryDirectory() as tmp_dir, hide_cmd_output():
            presets.data_dir = tmp_dir
            cmd(cmd_line="--variant relaxed --k 3 --epsilon-final 1e-3 --save my_preset")

            self.assertEqual(os.listdir(tmp_dir), ["my_preset.preset"])
            with open(os.path.join(tmp_dir, "my_preset.preset")) as f:
                preset = json.load(f)

        self.assertEqual(preset["variant"], "relaxed")
        self.assertEqual(preset["k"], "3")
        self.assertEqual(preset["epsilon_final"], "1e-3")
        self.assertEqual(len(preset.keys()), 4)  # 3 parameters + version

    @patch("otalign.presets.warn")
    def test_preset_ignores_run_arguments(self, warn_fn):
        with tempfile.TemporaryDirectory() as tmp_dir, hide_cmd_output():
            presets.data_dir = tmp_dir
            cmd(cmd_line="synth --rows 10 --seed 4 --save my_preset")
            with open(os.path.join(tmp_dir, "my_preset.preset")) as f:
                preset = json.load(f)

        self.assertEqual(preset["rows"], "10")
        self.assertNotIn("seed", preset)
        self.assertNotIn("command", preset)
        self.assertTrue(warn_fn.called)

    def test_update_preset(self):
        with tempfile.TemporaryDirectory() as tmp_dir, hide_cmd_output():
            presets.data_dir = tmp_dir
            cmd(cmd_line="--variant relaxed --save my_preset")
            cmd(cmd_line="--k 2 --save my_preset")
            with open(os.path.join(tmp_dir, "my_preset.preset")) as f:
                preset = json.load(f)

        self.assertEqual(preset["variant"], "relaxed")
        self.assertEqual(preset["k"], "2")

    def test_roundtrip_preset(self):
        with tempfile.TemporaryDirectory() as tmp_dir, hide_cmd_output():
            presets.data_dir = tmp_dir
            cmd(cmd_line="--variant 1:k --k 1 --max-iter 40 --save my_preset")
            config = self.config_from_line(
                f"align {self.data('doc_a.txt')} {self.data('doc_b.txt')} -e {self.embeddings} --preset my_preset",
                preset=True,
            )
        self.assertEqual(config.spec, ConstraintSpec(Variant.ONE_TO_K, 1))
        self.assertEqual(config.solver.max_iterations_per_epsilon, 40)

    @patch("otalign.wrapper.warn")
    def test_save_and_load(self, warn_fn):
        with self.assertRaises(SystemExit) as cm:
            cmd(cmd_line="--preset strict --save other")
        self.assertEqual(cm.exception.code, 1)


class DocumentationTests(CliTests):
    def test_epilog(self):
        epilog = get_parser().epilog
        for keyword in ("align", "exact_k", "relaxed_one_to_k", "negative_cosine", "Synonyms"):
            self.assertIn(keyword, epilog)

    def test_default_metrics(self):
        table = format_default_metrics()
        self.assertIn("Default cost", table)
        self.assertIn("negative_cosine", table)
