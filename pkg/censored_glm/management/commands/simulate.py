import json
from pathlib import Path

from django.conf import settings

from censored_glm.serializers import MetricsRowSerializer, ScenarioConfigSerializer, raise_schema_error
from censored_glm.services.exceptions import SchemaError
from censored_glm.services.monte_carlo import Method, run_monte_carlo
from censored_glm.services.reporting import format_metrics_table, metrics_to_csv

from ._options import OUTPUT_FORMATS, ServiceCommand


class Command(ServiceCommand):
    help = "Run a Monte Carlo study from a JSON scenario config"

    def add_arguments(self, parser):
        parser.add_argument("config", help="JSON scenario config")
        parser.add_argument("--seed", type=int)
        parser.add_argument("--reps", type=int)
        parser.add_argument("--n", type=int)
        parser.add_argument(
            "--methods",
            nargs="+",
            choices=[method.value for method in Method],
        )
        parser.add_argument("--stabilize", action="store_true")
        parser.add_argument("--workers", type=int)
        parser.add_argument(
            "--full-scale",
            action="store_true",
            help=f"run {settings.SIM_FULL_SCALE_REPS} replications",
        )
        parser.add_argument("--format", default="table", choices=OUTPUT_FORMATS)
        parser.add_argument("--out", help="also write the metrics CSV here")

    def load_config(self, path, options):
        try:
            mapping = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise SchemaError(f"scenario config not found: {path}")
        except json.JSONDecodeError as exc:
            raise SchemaError(f"scenario config {path} is not valid JSON: {exc}")
        if not isinstance(mapping, dict):
            raise SchemaError(f"scenario config {path} must hold a JSON object")

        serializer = ScenarioConfigSerializer(data=mapping)
        if not serializer.is_valid():
            raise_schema_error(serializer, f"invalid scenario config {path}")

        n_reps = settings.SIM_FULL_SCALE_REPS if options["full_scale"] else options.get("reps")
        return serializer.to_config(
            seed=options.get("seed"),
            n_reps=n_reps,
            n=options.get("n"),
            methods=options.get("methods"),
            stabilize=True if options.get("stabilize") else None,
        )

    def run(self, **options):
        cfg = self.load_config(options["config"], options)
        rows = run_monte_carlo(cfg, workers=options.get("workers"))

        if options["out"]:
            Path(options["out"]).write_text(metrics_to_csv(rows), encoding="utf-8")

        if options["format"] == "json":
            text = json.dumps(MetricsRowSerializer(rows, many=True).data, indent=2) + "\n"
        elif options["format"] == "csv":
            text = metrics_to_csv(rows)
        else:
            text = (
                f"{cfg.family.value} / {cfg.censor_level.value}, n = {cfg.n}, "
                f"M = {cfg.n_reps}, seed = {cfg.seed}, censoring scale {rows[0].censor_scale:.4f}"
                f"{', stabilized' if cfg.stabilize else ''}\n"
                + format_metrics_table(rows, cfg.family)
            )
        self.stdout.write(text, ending="")

        failed = [row for row in rows if not row.valid]
        for row in failed:
            self.stderr.write(self.style.WARNING(f"{row.method.label}: every replication failed"))
        if options["out"]:
            self.stdout.write(self.style.SUCCESS(f"Wrote {options['out']}"))
