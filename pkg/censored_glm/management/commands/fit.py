import json

from censored_glm.serializers import FitResultSerializer
from censored_glm.services.fitting import CensoredGlmService
from censored_glm.services.reporting import coefficients_to_csv, format_coefficient_table, format_number

from ._options import (
    OUTPUT_FORMATS,
    ServiceCommand,
    add_data_arguments,
    add_link_argument,
    add_weight_arguments,
    fit_request,
    load_request_data,
)


class Command(ServiceCommand):
    help = "Fit a GLM with a right-censored covariate under complete-case or IPCW weights"

    def add_arguments(self, parser):
        add_data_arguments(parser)
        add_weight_arguments(parser)
        add_link_argument(parser)
        parser.add_argument("--format", default="table", choices=OUTPUT_FORMATS)
        parser.add_argument("--out")

    def run(self, **options):
        request = fit_request(options)
        dataset = load_request_data(request)
        report = CensoredGlmService().fit(
            dataset, request.weight_spec(), request.validated_data["link"]
        )

        output_format = request.validated_data["format"]
        if output_format == "json":
            text = json.dumps(FitResultSerializer(report).data, indent=2) + "\n"
        elif output_format == "csv":
            text = coefficients_to_csv(report.coefficients)
        else:
            text = (
                f"Method: {report.method}  Link: {report.link}"
                f"{'  (stabilized)' if report.stabilized else ''}\n"
                f"n = {report.n} ({report.n_complete} complete, {report.n_censored} censored)\n"
                f"Dispersion: {format_number(report.dispersion)}\n\n"
                + format_coefficient_table(report.coefficients)
            )
            if report.n_floored:
                text += f"\n{report.n_floored} selection probabilities were floored\n"

        self.emit(text, request.validated_data.get("out"))
