"""
The `reportkg` command line.

Every subcommand is a traitlets Application; options can be given on the
command line (`--min-count 3`), as `--Augmenter.min_count=3`, or in a JSON
config file passed with `--config`::

    {"Augmenter": {"min_count": 3}, "Evaluator": {"match_mode": "keyword"}}

Command line options take precedence over the config file.
"""

import json
import os
import re
import sys

from slugify import slugify
from traitlets import Enum, Integer, List, TraitError, Unicode
from traitlets.config import Application
from traitlets.config.application import catch_config_error
from traitlets.config.loader import ConfigFileNotFound, JSONFileConfigLoader

from ._version import __version__
from .augment import Augmenter
from .corpus import assign_splits, corpus_stats, load_corpus, render_histogram, write_corpus
from .exceptions import InputFormatError, ReportKGError, UsageError
from .kg import SEED_KG_PATH, load_kg, validate_kg
from .labeler import Labeler
from .metrics import Evaluator, render_table
from .pipeline import (
    OracleClassifier,
    load_decisions,
    route,
    write_decisions,
    write_routing_log,
)
from .utils import atomic_write, dumps_json, dumps_jsonl, render_template

common_aliases = {
    "kg": "ReportKGCommand.kg_path",
    "config": "ReportKGCommand.config_file",
    "threads": "ReportKGCommand.threads",
    "log-level": "Application.log_level",
}

# --name, -n or --name=value; the captured name may be Class.trait
_option_pattern = re.compile(r"^--?([A-Za-z][\w.-]*)(?:=|$)")

corpus_format = """
Corpus files hold one JSON object per line:
{"id": "r1", "text": "...", "split": "train", "images": ["r1_0.png"]}
"""


class ReportKGCommand(Application):
    """Shared options and plumbing of every subcommand."""

    aliases = common_aliases

    kg_path = Unicode(
        SEED_KG_PATH,
        config=True,
        help="""
        Knowledge graph file. Defaults to the seed knowledge graph shipped
        with reportkg.
        """,
    )

    config_file = Unicode(
        "",
        config=True,
        help="""
        JSON config file, e.g. {"Augmenter": {"min_count": 3}}.
        """,
    )

    threads = Integer(
        0,
        config=True,
        help="""
        Worker threads for labeling. 0 leaves the choice to the components'
        own configuration, which defaults to the machine's parallelism.
        """,
    )

    @catch_config_error
    def initialize(self, argv=None):
        if argv is None:
            argv = sys.argv[1:]
        self.parse_command_line(argv)
        unknown = self.unknown_options(argv)
        if unknown:
            self.fail(UsageError(f"unrecognized option {unknown[0]}"))
        if self.extra_args:
            self.fail(UsageError(f"unexpected arguments: {' '.join(self.extra_args)}"))
        if self.config_file:
            try:
                self.load_json_config(self.config_file)
            except InputFormatError as e:
                self.fail(e)

    def unknown_options(self, argv):
        """Options in `argv` that are neither an alias, a flag nor Class.trait."""
        known = set()
        for key in list(self.aliases) + list(self.flags):
            known.update(key if isinstance(key, tuple) else (key,))
        unknown = []
        for arg in argv:
            if arg == "--":
                break
            match = _option_pattern.match(arg)
            if match and "." not in match.group(1) and match.group(1) not in known:
                unknown.append(arg.split("=", 1)[0])
        return unknown

    def load_json_config(self, path):
        """
        Load exactly `path` as a JSON config file. Options given on the
        command line keep precedence over it.
        """
        loader = JSONFileConfigLoader(
            os.path.basename(path), path=os.path.dirname(os.path.abspath(path)), log=self.log
        )
        try:
            config = loader.load_config()
        except ConfigFileNotFound:
            raise InputFormatError("no such config file", path=path)
        except (OSError, ValueError, TypeError) as e:
            raise InputFormatError(f"malformed config file: {e}", path=path)
        self.update_config(config)
        self.update_config(self.cli_config)
        self.log.info("Loaded config file %s", path)

    def start(self):
        try:
            self.run()
        except (ReportKGError, TraitError) as e:
            self.fail(e)

    def run(self):
        raise NotImplementedError

    def fail(self, error):
        """Report `error` as one JSON line on stderr and exit with its status."""
        status = getattr(error, "exit_status", 1)
        print(
            json.dumps(
                {"error": type(error).__name__, "message": str(error), "exit_status": status}
            ),
            file=sys.stderr,
        )
        self.exit(status)

    def require(self, **options):
        for name, value in options.items():
            if not value:
                raise UsageError(f"--{name} is required")

    def component(self, cls):
        """Instantiate a configurable component, applying --threads if set."""
        kwargs = {"threads": self.threads} if self.threads else {}
        return cls(parent=self, **kwargs)

    def load_kg(self, validate=True):
        kg = load_kg(self.kg_path, validate=validate)
        self.log.info("Loaded knowledge graph %s (%i entries)", self.kg_path, len(kg.entries))
        return kg

    def load_corpus(self, path):
        records = load_corpus(path)
        self.log.info("Loaded %i records from %s", len(records), path)
        return records

    def emit(self, text, path=""):
        """Write `text` atomically to `path`, or to stdout without a path."""
        if path:
            atomic_write(path, text)
            self.log.info("Wrote %s", path)
        else:
            sys.stdout.write(text)


class LabelCommand(ReportKGCommand):
    name = "reportkg label"
    description = (
        """
    Label every sentence of a corpus with the knowledge graph.

    Writes one JSON object per report: id, report_class, sentences (text and
    rendered label) and disease_set.
    """
        + corpus_format
    )

    aliases = {
        **common_aliases,
        "in": "LabelCommand.input_path",
        "out": "LabelCommand.output_path",
    }
    classes = [Labeler]

    input_path = Unicode("", config=True, help="Corpus to label.")
    output_path = Unicode("", config=True, help="Output file. Defaults to stdout.")

    def run(self):
        self.require(**{"in": self.input_path})
        kg = self.load_kg()
        labeled = self.component(Labeler).label(kg, self.load_corpus(self.input_path))
        self.emit(dumps_jsonl(r.to_dict() for r in labeled), self.output_path)


class StatsCommand(ReportKGCommand):
    name = "reportkg stats"
    description = (
        """
    Long-tail disease statistics of a corpus: sentence level occurrence counts
    per (disease, organ), d_free / d_com / d_tail sentence counts and the
    common and tail shares, as JSON.

    With --out the JSON goes to that file and the counts are printed as text
    bars. Without it, --format picks what is printed.
    """
        + corpus_format
    )

    aliases = {
        **common_aliases,
        "in": "StatsCommand.input_path",
        "out": "StatsCommand.output_path",
        "common-threshold": "StatsCommand.common_threshold",
        "rare-threshold": "StatsCommand.rare_threshold",
        "frequent-threshold": "StatsCommand.frequent_threshold",
        "format": "StatsCommand.output_format",
    }
    classes = [Labeler]

    input_path = Unicode("", config=True, help="Corpus to describe.")
    output_path = Unicode("", config=True, help="JSON statistics file.")
    common_threshold = Integer(
        20, config=True, help="Occurrences from which a disease is common."
    )
    rare_threshold = Integer(
        10, config=True, help="Diseases occurring fewer times than this are rare."
    )
    frequent_threshold = Integer(
        100, config=True, help="Diseases occurring more times than this are listed as frequent."
    )
    output_format = Enum(
        ["json", "histogram"],
        default_value="json",
        config=True,
        help="What to print on stdout when --out is not given.",
    )

    def run(self):
        self.require(**{"in": self.input_path})
        kg = self.load_kg()
        labeler = self.component(Labeler)
        records = self.load_corpus(self.input_path)
        try:
            stats = corpus_stats(
                kg,
                records,
                common_threshold=self.common_threshold,
                rare_threshold=self.rare_threshold,
                frequent_threshold=self.frequent_threshold,
                threads=labeler.threads,
            )
        except ValueError as e:
            raise UsageError(str(e))
        histogram = render_histogram(stats.disease_counts)
        if self.output_path:
            self.emit(dumps_json(stats.to_dict()), self.output_path)
            self.emit(histogram)
        elif self.output_format == "histogram":
            self.emit(histogram)
        else:
            self.emit(dumps_json(stats.to_dict()))


class AugmentCommand(ReportKGCommand):
    name = "reportkg augment"
    description = (
        """
    Rebalance the train split of a corpus by sentence substitution.

    The output corpus holds every input record followed by the synthetic
    reports. The augmentation report (rounds, covered diseases, occurrence
    counts and tail shares before and after) is written with --report, and a
    before / after histogram is printed.
    """
        + corpus_format
    )

    aliases = {
        **common_aliases,
        "in": "AugmentCommand.input_path",
        "out": "AugmentCommand.output_path",
        "report": "AugmentCommand.report_path",
        "min-count": "Augmenter.min_count",
        "max-count": "Augmenter.max_count",
        "max-rounds": "Augmenter.max_rounds",
        "max-variants": "Augmenter.max_variants",
        "common-threshold": "Augmenter.common_threshold",
        "seed": "Augmenter.seed",
    }
    classes = [Augmenter]

    input_path = Unicode("", config=True, help="Corpus to augment.")
    output_path = Unicode("", config=True, help="Augmented corpus file.")
    report_path = Unicode("", config=True, help="Augmentation report file (JSON).")

    def run(self):
        self.require(**{"in": self.input_path, "out": self.output_path})
        kg = self.load_kg()
        augmenter = self.component(Augmenter)
        corpus, report = augmenter.augment(kg, self.load_corpus(self.input_path))
        write_corpus(corpus, self.output_path)
        self.log.info("Wrote %s (%i synthetic reports)", self.output_path, report.emitted)
        if self.report_path:
            self.emit(dumps_json(report.to_dict()), self.report_path)
        self.emit(report.histogram())


class EvaluateCommand(ReportKGCommand):
    name = "reportkg evaluate"
    description = (
        """
    Evaluate generated reports against the ground truth: confusion counts,
    Sensitivity, Diversity, DS and DOR, optionally BLEU-N.

    --gen can be repeated to compare several systems in one table; system
    names default to the generated file names.
    """
        + corpus_format
    )

    aliases = {
        **common_aliases,
        "gt": "EvaluateCommand.gt_path",
        "gen": "EvaluateCommand.gen_paths",
        "name": "EvaluateCommand.names",
        "out": "EvaluateCommand.output_path",
        "format": "EvaluateCommand.output_format",
        "diversity-mode": "Evaluator.diversity_mode",
        "match-mode": "Evaluator.match_mode",
        "bleu-order": "Evaluator.bleu_order",
    }
    flags = {
        "dor-correction": (
            {"Evaluator": {"dor_correction": True}},
            "Add 0.5 to every confusion cell before computing the DOR.",
        ),
    }
    classes = [Evaluator]

    gt_path = Unicode("", config=True, help="Ground truth corpus.")
    gen_paths = List(Unicode(), config=True, help="Generated corpora, one per system.")
    names = List(Unicode(), config=True, help="System names, in --gen order.")
    output_path = Unicode("", config=True, help="Output file. Defaults to stdout.")
    output_format = Enum(
        ["json", "table"], default_value="json", config=True, help="Output format."
    )

    def system_names(self):
        if self.names:
            if len(self.names) != len(self.gen_paths):
                raise UsageError("--name must be given once per --gen")
            return list(self.names)
        names = []
        for path in self.gen_paths:
            name = slugify(os.path.splitext(os.path.basename(path))[0]) or "system"
            candidate, n = name, 1
            while candidate in names:
                n += 1
                candidate = f"{name}-{n}"
            names.append(candidate)
        return names

    def run(self):
        self.require(gt=self.gt_path, gen=self.gen_paths)
        kg = self.load_kg()
        gt = self.load_corpus(self.gt_path)
        systems = [
            (name, self.load_corpus(path))
            for name, path in zip(self.system_names(), self.gen_paths)
        ]
        summaries = self.component(Evaluator).evaluate_many(kg, gt, systems)
        if self.output_format == "table":
            self.emit(render_table(summaries), self.output_path)
        elif len(summaries) == 1:
            self.emit(dumps_json(summaries[0].to_dict()), self.output_path)
        else:
            self.emit(dumps_json([s.to_dict() for s in summaries]), self.output_path)


class RouteCommand(ReportKGCommand):
    name = "reportkg route"
    description = (
        """
    Two-stage routing: take every case's report from the disease-free or the
    disease-specific generator, as its classifier decision says.

    Decisions are read from --decisions, one {"id": ..., "decision":
    "disease-free" | "disease-specific"} object per line, or produced by the
    oracle classifier from --gt (with --flip-rate and --seed). With
    --summary-out the routed corpus is also evaluated against --gt.
    """
        + corpus_format
    )

    aliases = {
        **common_aliases,
        "gt": "RouteCommand.gt_path",
        "decisions": "RouteCommand.decisions_path",
        "free": "RouteCommand.free_path",
        "specific": "RouteCommand.specific_path",
        "out": "RouteCommand.output_path",
        "log-out": "RouteCommand.log_path",
        "decisions-out": "RouteCommand.decisions_out_path",
        "summary-out": "RouteCommand.summary_path",
        "flip-rate": "OracleClassifier.flip_rate",
        "seed": "OracleClassifier.seed",
        "diversity-mode": "Evaluator.diversity_mode",
        "match-mode": "Evaluator.match_mode",
    }
    classes = [OracleClassifier, Evaluator]

    gt_path = Unicode("", config=True, help="Ground truth corpus.")
    decisions_path = Unicode("", config=True, help="Classifier decisions file.")
    free_path = Unicode("", config=True, help="Outputs of the disease-free generator.")
    specific_path = Unicode("", config=True, help="Outputs of the disease-specific generator.")
    output_path = Unicode("", config=True, help="Routed corpus file.")
    log_path = Unicode("", config=True, help="Routing log file (JSON lines).")
    decisions_out_path = Unicode(
        "", config=True, help="Write the oracle classifier's decisions here."
    )
    summary_path = Unicode("", config=True, help="Evaluation summary of the routed corpus.")

    def run(self):
        self.require(free=self.free_path, specific=self.specific_path, out=self.output_path)
        kg = None
        gt = None
        if self.decisions_path:
            decisions = load_decisions(self.decisions_path)
        else:
            self.require(gt=self.gt_path)
            kg = self.load_kg()
            gt = self.load_corpus(self.gt_path)
            decisions = self.component(OracleClassifier).classify(kg, gt)
            if self.decisions_out_path:
                write_decisions(decisions, self.decisions_out_path)
                self.log.info("Wrote %s", self.decisions_out_path)

        free = self.load_corpus(self.free_path)
        specific = self.load_corpus(self.specific_path)
        routed, cases = route(decisions, free, specific, log=self.log)
        write_corpus(routed, self.output_path)
        self.log.info("Wrote %s (%i routed reports)", self.output_path, len(routed))
        if self.log_path:
            write_routing_log(cases, self.log_path)
            self.log.info("Wrote %s", self.log_path)

        if self.summary_path:
            self.require(gt=self.gt_path)
            if kg is None:
                kg = self.load_kg()
                gt = self.load_corpus(self.gt_path)
            summary = self.component(Evaluator).evaluate(kg, gt, routed, name="routed")
            self.emit(dumps_json(summary.to_dict()), self.summary_path)


class ValidateKGCommand(ReportKGCommand):
    name = "reportkg validate-kg"
    description = """
    Check a knowledge graph file and list every violation, followed by the
    entries per category. Exits with status 3 when there are violations.
    """

    def run(self):
        kg = self.load_kg(validate=False)
        violations = validate_kg(kg)
        lines = [f"{len(violations)} violations\n"]
        lines.extend(f"  {v}\n" for v in violations)
        grouped = kg.entries_by_category()
        lines.append(
            render_template(
                "categories.txt.j2",
                version=kg.version,
                categories=[(c, grouped[c]) for c in grouped],
                width=max((len(c) for c in grouped), default=0),
            )
        )
        self.emit("".join(lines))
        if violations:
            self.exit(3)


class SplitCommand(ReportKGCommand):
    name = "reportkg split"
    description = (
        """
    Reassign the train / validation / test split of every record in the
    given proportions (7:1:2 by default), using a seeded shuffle.
    """
        + corpus_format
    )

    aliases = {
        **common_aliases,
        "in": "SplitCommand.input_path",
        "out": "SplitCommand.output_path",
        "ratios": "SplitCommand.ratios",
        "seed": "SplitCommand.seed",
    }

    input_path = Unicode("", config=True, help="Corpus to split.")
    output_path = Unicode("", config=True, help="Output corpus file.")
    ratios = List(
        Integer(), default_value=[7, 1, 2], config=True, help="train, validation and test ratios."
    )
    seed = Integer(0, config=True, help="Seed of the shuffle.")

    def run(self):
        self.require(**{"in": self.input_path, "out": self.output_path})
        records = self.load_corpus(self.input_path)
        try:
            records = assign_splits(records, tuple(self.ratios), seed=self.seed)
        except ValueError as e:
            raise UsageError(str(e))
        write_corpus(records, self.output_path)
        self.log.info("Wrote %s", self.output_path)


def _command(cls):
    # fresh instances, so that several runs in one process do not share state
    return lambda parent: cls(parent=parent)


class ReportKGApp(Application):
    name = "reportkg"
    version = __version__
    description = """
    Knowledge graph based labeling, long-tail augmentation and clinical
    evaluation of radiology reports.
    """

    subcommands = {
        "label": (_command(LabelCommand), "Label every sentence of a corpus."),
        "stats": (_command(StatsCommand), "Long-tail disease statistics of a corpus."),
        "augment": (_command(AugmentCommand), "Augment the train split of a corpus."),
        "evaluate": (_command(EvaluateCommand), "Evaluate generated reports."),
        "route": (_command(RouteCommand), "Route generator outputs by classifier decision."),
        "validate-kg": (_command(ValidateKGCommand), "Check a knowledge graph file."),
        "split": (_command(SplitCommand), "Assign train / validation / test splits."),
    }

    def start(self):
        if self.subapp is not None:
            return self.subapp.start()
        if self.extra_args:
            error = UsageError(f"unknown subcommand {self.extra_args[0]!r}")
            print(
                json.dumps(
                    {"error": type(error).__name__, "message": str(error), "exit_status": 1}
                ),
                file=sys.stderr,
            )
        else:
            self.print_help()
        self.exit(1)


def main(argv=None):
    app = ReportKGApp()
    app.initialize(argv)
    app.start()


if __name__ == "__main__":
    main()
