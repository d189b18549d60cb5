from censored_glm.services.fitting import CensoredGlmService
from censored_glm.services.reporting import weights_to_csv

from ._options import ServiceCommand, add_data_arguments, add_weight_arguments, fit_request, load_request_data


class Command(ServiceCommand):
    help = "Write per-row selection probabilities and weights as CSV"

    def add_arguments(self, parser):
        add_data_arguments(parser)
        add_weight_arguments(parser)
        parser.add_argument("--out")

    def run(self, **options):
        request = fit_request(options)
        dataset = load_request_data(request)
        rows = CensoredGlmService().weight_table(dataset, request.weight_spec())
        self.emit(weights_to_csv(rows), request.validated_data.get("out"))
