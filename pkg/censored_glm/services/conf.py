from typing import Any

from django.conf import settings


def setting(name: str, default: Any) -> Any:
    # Library callers may run without a configured Django project.
    if not settings.configured:
        return default
    return getattr(settings, name, default)
