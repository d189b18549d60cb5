import logging

from rest_framework import status
from rest_framework.response import Response
from rest_framework.views import APIView

from .serializers import FitPayloadSerializer, FitResultSerializer
from .services import CensoredGlmService, LinkKind, WeightScheme
from .services.exceptions import CensoredGlmError, ConvergenceError

logger = logging.getLogger(__name__)


class FitView(APIView):
    def post(self, request):
        serializer = FitPayloadSerializer(data=request.data)
        if not serializer.is_valid():
            return Response(serializer.errors, status=status.HTTP_400_BAD_REQUEST)

        try:
            dataset = serializer.dataset()
            report = CensoredGlmService().fit(
                dataset,
                serializer.weight_spec(),
                serializer.validated_data["link"],
            )
            return Response(FitResultSerializer(report).data, status=status.HTTP_200_OK)

        except ConvergenceError as e:
            return Response(
                {"error": str(e)},
                status=status.HTTP_422_UNPROCESSABLE_ENTITY,
            )
        except CensoredGlmError as e:
            return Response(
                {"error": str(e)},
                status=status.HTTP_400_BAD_REQUEST,
            )
        except Exception as e:
            logger.exception("Unexpected failure while fitting")
            return Response(
                {"error": f"An error occurred: {str(e)}"},
                status=status.HTTP_500_INTERNAL_SERVER_ERROR,
            )


class HealthCheckView(APIView):
    def get(self, request):
        return Response(
            {
                "status": "healthy",
                "links": [link.value for link in LinkKind],
                "weight_schemes": [scheme.value for scheme in WeightScheme],
            }
        )
