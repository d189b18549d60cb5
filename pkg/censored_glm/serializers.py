import math

from django.conf import settings
from rest_framework import serializers

from .services.data_model import ColumnSchema, Dataset, WeightScheme
from .services.exceptions import SchemaError
from .services.glm import LinkKind
from .services.monte_carlo import Method, ScenarioConfig
from .services.scenarios import CensorLevel, ScenarioFamily
from .services.weights import WeightSpec

OUTPUT_FORMATS = ("table", "json", "csv")


def raise_schema_error(serializer: serializers.Serializer, message: str):
    fields = {
        name: [str(error) for error in (errors if isinstance(errors, list) else [errors])]
        for name, errors in serializer.errors.items()
    }
    raise SchemaError(message, fields)


class RejectUnknownFieldsMixin:
    def validate(self, attrs):
        unknown = sorted(set(self.initial_data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError({name: "unknown field" for name in unknown})
        return super().validate(attrs)


class WeightOptionsSerializer(serializers.Serializer):
    method = serializers.ChoiceField(
        choices=[scheme.value for scheme in WeightScheme], default=WeightScheme.CC.value
    )
    link = serializers.ChoiceField(
        choices=[link.value for link in LinkKind], default=LinkKind.IDENTITY.value
    )
    stabilize = serializers.BooleanField(default=False)
    floor = serializers.FloatField(required=False, allow_null=True, min_value=0.0)
    truncate = serializers.FloatField(required=False, allow_null=True, min_value=0.5, max_value=1.0)
    exclude_outcome = serializers.BooleanField(default=False)

    def validate_floor(self, value):
        if value is not None and value <= 0:
            raise serializers.ValidationError("Ensure this value is greater than 0.")
        return value

    def validate_truncate(self, value):
        if value is not None and value <= 0.5:
            raise serializers.ValidationError("Ensure this value is greater than 0.5.")
        return value

    def weight_spec(self) -> WeightSpec:
        data = self.validated_data
        return WeightSpec.from_settings(
            data["method"],
            stabilize=data["stabilize"],
            floor=data.get("floor"),
            truncate_percentile=data.get("truncate"),
            include_outcome=not data["exclude_outcome"],
        )


class FitRequestSerializer(WeightOptionsSerializer):
    input = serializers.CharField()
    schema = serializers.CharField(required=False, allow_null=True)
    v_col = serializers.CharField(default="v")
    delta_col = serializers.CharField(default="delta")
    y_col = serializers.CharField(default="y")
    z_cols = serializers.ListField(child=serializers.CharField(), default=list)
    h_cols = serializers.ListField(child=serializers.CharField(), default=list)
    interactions = serializers.ListField(child=serializers.CharField(), default=list)
    format = serializers.ChoiceField(choices=OUTPUT_FORMATS, default="table")
    out = serializers.CharField(required=False, allow_null=True)

    def column_schema(self) -> ColumnSchema:
        data = self.validated_data
        if data.get("schema"):
            return ColumnSchema.from_json(data["schema"])
        return ColumnSchema(
            v=data["v_col"],
            delta=data["delta_col"],
            y=data["y_col"],
            z=tuple(data["z_cols"]),
            h_extra=tuple(data["h_cols"]),
            interactions=tuple(data["interactions"]),
        )


class FitPayloadSerializer(RejectUnknownFieldsMixin, WeightOptionsSerializer):
    v = serializers.ListField(child=serializers.FloatField(), min_length=1)
    delta = serializers.ListField(child=serializers.IntegerField(min_value=0, max_value=1), min_length=1)
    y = serializers.ListField(child=serializers.FloatField(), min_length=1)
    z = serializers.DictField(child=serializers.ListField(child=serializers.FloatField()), default=dict)
    h_extra = serializers.DictField(child=serializers.ListField(child=serializers.FloatField()), default=dict)
    interactions = serializers.ListField(child=serializers.CharField(), default=list)

    def validate(self, attrs):
        attrs = super().validate(attrs)
        n = len(attrs["v"])
        errors = {}
        for name in ("delta", "y"):
            if len(attrs[name]) != n:
                errors[name] = f"expected {n} values, got {len(attrs[name])}"
        for group in ("z", "h_extra"):
            for column, values in attrs[group].items():
                if len(values) != n:
                    errors[f"{group}.{column}"] = f"expected {n} values, got {len(values)}"
        if errors:
            raise serializers.ValidationError(errors)
        return attrs

    def dataset(self) -> Dataset:
        data = self.validated_data
        schema = ColumnSchema(
            z=tuple(data["z"]),
            h_extra=tuple(data["h_extra"]),
            interactions=tuple(data["interactions"]),
        )
        n = len(data["v"])
        return Dataset.from_arrays(
            v=data["v"],
            delta=data["delta"],
            y=data["y"],
            z=[[data["z"][name][i] for name in schema.z] for i in range(n)] if schema.z else None,
            h_extra=(
                [[data["h_extra"][name][i] for name in schema.h_extra] for i in range(n)]
                if schema.h_extra
                else None
            ),
            schema=schema,
            interactions=schema.interaction_indices,
        )


class ScenarioConfigSerializer(RejectUnknownFieldsMixin, serializers.Serializer):
    family = serializers.ChoiceField(choices=[family.value for family in ScenarioFamily])
    n = serializers.IntegerField(min_value=50)
    censor_level = serializers.ChoiceField(choices=[level.value for level in CensorLevel])
    n_reps = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, max_value=2**64 - 1, default=0)
    methods = serializers.ListField(
        child=serializers.ChoiceField(choices=[method.value for method in Method]),
        default=lambda: [method.value for method in Method],
        min_length=1,
    )
    stabilize = serializers.BooleanField(default=False)
    target_fraction = serializers.FloatField(required=False, allow_null=True, min_value=0.0, max_value=1.0)
    censor_scale = serializers.FloatField(required=False, allow_null=True, min_value=0.0)
    noise_free = serializers.BooleanField(default=False)
    no_censoring = serializers.BooleanField(default=False)

    def to_config(self, **overrides) -> ScenarioConfig:
        values = dict(self.validated_data)
        values.setdefault("n_reps", settings.SIM_DEFAULT_REPS)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return ScenarioConfig(**values)


class FiniteFloatField(serializers.FloatField):
    def to_representation(self, value):
        if value is None or not math.isfinite(value):
            return None
        return float(value)


class CoefficientSerializer(serializers.Serializer):
    term = serializers.CharField(source="name")
    estimate = FiniteFloatField()
    se = FiniteFloatField()
    t_value = FiniteFloatField(allow_null=True)
    p_value = FiniteFloatField(allow_null=True)


class FitResultSerializer(serializers.Serializer):
    method = serializers.CharField()
    link = serializers.CharField()
    stabilized = serializers.BooleanField()
    n = serializers.IntegerField()
    n_complete = serializers.IntegerField()
    n_censored = serializers.IntegerField()
    n_floored = serializers.IntegerField()
    n_truncated = serializers.IntegerField()
    dispersion = FiniteFloatField(allow_null=True)
    iterations = serializers.IntegerField()
    converged = serializers.BooleanField()
    coefficients = CoefficientSerializer(many=True)


class MetricsRowSerializer(serializers.Serializer):
    method = serializers.CharField(source="method.value")
    label = serializers.CharField(source="method.label")
    parameter = serializers.CharField()
    truth = FiniteFloatField()
    bias = FiniteFloatField(allow_null=True)
    pct_bias = FiniteFloatField(allow_null=True)
    se_model = FiniteFloatField(allow_null=True)
    sd_empirical = FiniteFloatField(allow_null=True)
    mse = FiniteFloatField(allow_null=True)
    achieved_censoring = FiniteFloatField()
    censor_scale = FiniteFloatField()
    n_failed_reps = serializers.IntegerField()
    n_reps = serializers.IntegerField()
    valid = serializers.BooleanField()
    sd_defined = serializers.BooleanField()
