"""
URL configuration for ipcw_api project.
"""
from django.urls import path, include

urlpatterns = [
    path('api/', include('censored_glm.urls')),
]
