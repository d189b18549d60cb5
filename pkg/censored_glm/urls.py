"""
URL configuration for the censored GLM API.
"""
from django.urls import path
from .views import FitView, HealthCheckView

urlpatterns = [
    path("fit/", FitView.as_view(), name="fit"),
    path("health/", HealthCheckView.as_view(), name="health-check"),
]
