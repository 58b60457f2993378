# fieldtheory/serializers.py
from rest_framework import serializers

from .models import ScenarioRun

SCENARIO_CHOICES = (
    "ym-evolve",
    "palatini-evolve",
    "pca-analyze",
    "check-invariants",
    "lambda-sweep",
    "reduction-report",
)


class StrictSerializer(serializers.Serializer):
    """Rejects keys that are not declared fields (typos must not pass silently)."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ["Unknown key."] for key in unknown})
        return super().to_internal_value(data)


# ----- Run config sections -----
class AlgebraSectionSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=("abelian", "su2", "so"))
    dim = serializers.IntegerField(min_value=1, required=False, default=1)


class MeshSectionSerializer(StrictSerializer):
    sites = serializers.ListField(child=serializers.IntegerField(min_value=3), min_length=1, max_length=3)
    length = serializers.FloatField(min_value=1e-12, required=False, default=1.0)
    n_t = serializers.IntegerField(min_value=2, required=False, default=8)
    dt = serializers.FloatField(min_value=1e-15, required=False, allow_null=True, default=None)


class RunSectionSerializer(StrictSerializer):
    steps = serializers.IntegerField(min_value=0, required=False, default=20)
    dt = serializers.FloatField(min_value=1e-15, required=False, allow_null=True, default=None)
    projection = serializers.BooleanField(required=False, default=False)
    samples = serializers.IntegerField(min_value=2, required=False, default=5)


class DynamicsSectionSerializer(StrictSerializer):
    coupling = serializers.FloatField(min_value=0.0, required=False, default=0.0)
    lambdas = serializers.ListField(
        child=serializers.FloatField(min_value=1e-300), required=False, default=[1.0, 0.1, 0.01], min_length=1,
    )
    amplitude = serializers.FloatField(min_value=0.0, required=False, default=0.1)


class ToleranceSectionSerializer(StrictSerializer):
    residual = serializers.FloatField(min_value=0.0, required=False, default=1e-10)
    variational = serializers.FloatField(min_value=0.0, required=False, default=1e-6)
    slope = serializers.FloatField(min_value=0.0, required=False, default=0.2)
    isotropy = serializers.FloatField(min_value=0.0, required=False, default=1e-8)
    gauge = serializers.FloatField(min_value=0.0, required=False, default=1e-12)
    energy_drift = serializers.FloatField(min_value=0.0, required=False, default=1e-6)
    order = serializers.FloatField(min_value=0.0, required=False, default=0.3)
    lagrange = serializers.FloatField(min_value=0.0, required=False, default=1e-8)
    identity = serializers.FloatField(min_value=0.0, required=False, default=1e-12)


class RunConfigSerializer(StrictSerializer):
    scenario = serializers.ChoiceField(choices=SCENARIO_CHOICES)
    seed = serializers.IntegerField(min_value=0)
    out = serializers.CharField(required=False, allow_blank=True, default="")
    algebra = AlgebraSectionSerializer()
    mesh = MeshSectionSerializer()
    run = RunSectionSerializer()
    dynamics = DynamicsSectionSerializer()
    tolerances = ToleranceSectionSerializer()

    def validate(self, attrs):
        scenario, algebra = attrs["scenario"], attrs["algebra"]
        if scenario in ("palatini-evolve", "pca-analyze"):
            if algebra["kind"] != "so" or algebra["dim"] != len(attrs["mesh"]["sites"]):
                raise serializers.ValidationError(
                    {"algebra": ["Palatini runs need so(1,d) with d equal to the number of spatial dimensions."]}
                )
        if scenario == "lambda-sweep" and len(attrs["dynamics"]["lambdas"]) < 2:
            raise serializers.ValidationError({"dynamics": ["lambda-sweep needs at least two lambdas to fit a slope."]})
        return attrs


# ----- Run history -----
class ScenarioRunSerializer(serializers.ModelSerializer):
    class Meta:
        model = ScenarioRun
        fields = ["id", "scenario", "seed", "passed", "config", "summary", "output_dir", "created_at"]
        read_only_fields = fields
