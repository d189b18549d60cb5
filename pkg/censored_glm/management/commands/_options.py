"""
Arguments and error handling shared by the fit, weights and simulate commands.
"""
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from censored_glm.serializers import OUTPUT_FORMATS, FitRequestSerializer, raise_schema_error
from censored_glm.services.data_model import WeightScheme, load_csv
from censored_glm.services.exceptions import CensoredGlmError
from censored_glm.services.glm import LinkKind

REQUEST_OPTIONS = (
    "input",
    "schema",
    "v_col",
    "delta_col",
    "y_col",
    "z_cols",
    "h_cols",
    "interactions",
    "method",
    "link",
    "stabilize",
    "floor",
    "truncate",
    "exclude_outcome",
    "format",
    "out",
)


class ServiceCommand(BaseCommand):
    """Runs `run()` and turns library errors into CommandError with the matching exit code."""

    def handle(self, *args, **options):
        try:
            self.run(**options)
        except CensoredGlmError as exc:
            raise CommandError(str(exc), returncode=exc.exit_code) from exc

    def run(self, **options):
        raise NotImplementedError

    def emit(self, text: str, out=None):
        if out:
            Path(out).write_text(text, encoding="utf-8")
            self.stdout.write(self.style.SUCCESS(f"Wrote {out}"))
        else:
            self.stdout.write(text, ending="")


def add_data_arguments(parser):
    parser.add_argument("--input", required=True, help="CSV file with a header row")
    parser.add_argument("--schema", help="JSON file mapping roles to column names")
    parser.add_argument("--v-col", default="v")
    parser.add_argument("--delta-col", default="delta")
    parser.add_argument("--y-col", default="y")
    parser.add_argument("--z-cols", nargs="*", default=[])
    parser.add_argument("--h-cols", nargs="*", default=[])
    parser.add_argument("--interactions", nargs="*", default=[])


def add_weight_arguments(parser):
    parser.add_argument(
        "--method",
        default=WeightScheme.CC.value,
        choices=[scheme.value for scheme in WeightScheme],
    )
    parser.add_argument("--stabilize", action="store_true")
    parser.add_argument("--floor", type=float)
    parser.add_argument("--truncate", type=float, help="percentile in (0.5, 1]")
    parser.add_argument(
        "--exclude-outcome",
        action="store_true",
        help="leave Y out of the selection model",
    )


def add_link_argument(parser):
    parser.add_argument(
        "--link",
        default=LinkKind.IDENTITY.value,
        choices=[link.value for link in LinkKind],
    )


def fit_request(options) -> FitRequestSerializer:
    data = {key: options[key] for key in REQUEST_OPTIONS if options.get(key) is not None}
    serializer = FitRequestSerializer(data=data)
    if not serializer.is_valid():
        raise_schema_error(serializer, "invalid request")
    return serializer


def load_request_data(request: FitRequestSerializer):
    return load_csv(request.validated_data["input"], request.column_schema())
