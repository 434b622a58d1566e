import os

from otalign.constants import (
    COMMANDS,
    COMMAND_INPUTS,
    HEATMAP_FORMATS,
    DEFAULT_VARIANT,
    DEFAULT_K,
    DEFAULT_SYNTH_K,
    DEFAULT_SYNTH_ROWS,
    DEFAULT_SYNTH_COLS,
    DEFAULT_TRIALS,
    DEFAULT_METRICS,
    Variant,
)
from otalign.constraints import ConstraintSpec
from otalign.exceptions import InvalidParameter
from otalign.transport import SolverConfig
from otalign.utilities import (
    get_abs_variant,
    get_abs_metric,
    parse_positive_int,
    parse_real,
)


class RunConfig:
    """
    Everything a command needs, validated upfront.
    Unspecified variant, k and metric fall back to the defaults of the command.
    """

    def __init__(
        self,
        command,
        inputs=(),
        variant=None,
        k=None,
        metric=None,
        lam=None,
        delta=None,
        delta_grid=None,
        solver=None,
        embeddings=None,
        gold=None,
        seed=0,
        trials=DEFAULT_TRIALS,
        rows=DEFAULT_SYNTH_ROWS,
        cols=DEFAULT_SYNTH_COLS,
        output="",
        heatmap="none",
    ):
        if command is None or command == "":
            raise InvalidParameter(
                f"Specify a command ({', '.join(COMMANDS)})"
            )

        self.command = str(command).lower()
        if self.command not in COMMANDS:
            raise InvalidParameter(
                f"Unknown command: '{command}' (expected one of {', '.join(COMMANDS)})"
            )

        self.inputs = list(inputs or [])
        expected = COMMAND_INPUTS[self.command]
        if len(self.inputs) != expected:
            raise InvalidParameter(
                f"The {self.command} command takes {expected} input file(s) "
                f"({len(self.inputs)} given)"
            )

        if variant is None:
            self.variant = DEFAULT_VARIANT
        else:
            self.variant = get_abs_variant(variant)

        if k is None and self.variant != Variant.VANILLA:
            k = DEFAULT_SYNTH_K if self.command == "synth" else DEFAULT_K
        self.spec = ConstraintSpec(self.variant, k)

        if metric is None:
            self.metric = DEFAULT_METRICS[self.variant]
        else:
            self.metric = get_abs_metric(metric)

        if lam is None:
            self.lam = None
        else:
            self.lam = parse_real(lam, "active threshold lambda")
            if self.lam < 0:
                raise InvalidParameter(
                    f"The active threshold must be nonnegative (received '{lam}')"
                )

        if delta is not None and delta_grid is not None:
            raise InvalidParameter("Give either a threshold delta or a grid, not both")

        self.delta = None if delta is None else parse_real(delta, "threshold delta")
        if delta_grid is None:
            self.delta_grid = None
        else:
            self.delta_grid = [parse_real(d, "threshold delta") for d in delta_grid]
            if len(self.delta_grid) == 0:
                raise InvalidParameter("The threshold grid is empty")

        if solver is None:
            self.solver = SolverConfig()
        elif isinstance(solver, SolverConfig):
            self.solver = solver
        else:
            self.solver = SolverConfig.from_dict(solver)

        self.embeddings = embeddings
        if self.command in ("align", "rank") and not embeddings:
            raise InvalidParameter(
                f"The {self.command} command needs an embedding file (--embeddings)"
            )

        self.gold = gold
        if self.command == "rationale" and not gold:
            raise InvalidParameter("The rationale command needs gold rationales (--gold)")

        try:
            self.seed = int(seed)
        except (ValueError, TypeError):
            raise InvalidParameter(f"Invalid seed: '{seed}'")

        if self.seed < 0:
            raise InvalidParameter(f"The seed must be nonnegative (received '{seed}')")

        self.trials = parse_positive_int(trials, "number of trials")
        self.rows = parse_positive_int(rows, "number of rows")
        self.cols = parse_positive_int(cols, "number of columns")

        self.output = output or ""

        if heatmap is None:
            heatmap = "none"
        self.heatmap = str(heatmap).lower()
        if self.heatmap not in HEATMAP_FORMATS:
            raise InvalidParameter(
                f"Unknown heatmap format: '{heatmap}' "
                f"(expected one of {', '.join(HEATMAP_FORMATS)})"
            )

    def svg_path(self, suffix=""):
        """Heatmap file next to the output, or in the current directory"""
        if self.output:
            stem = os.path.splitext(self.output)[0]
        else:
            stem = self.command
        if suffix:
            stem += f"_{suffix}"
        return stem + ".svg"
