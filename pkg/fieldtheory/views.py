# fieldtheory/views.py
from django.shortcuts import get_object_or_404
from rest_framework.decorators import api_view
from rest_framework.response import Response

from .models import ScenarioRun
from .serializers import ScenarioRunSerializer


@api_view(["GET"])
def run_list(request):
    runs = ScenarioRun.objects.all()
    scenario = request.query_params.get("scenario")
    if scenario:
        runs = runs.filter(scenario=scenario)
    return Response(ScenarioRunSerializer(runs[:100], many=True).data)


@api_view(["GET"])
def run_detail(request, pk):
    run = get_object_or_404(ScenarioRun, pk=pk)
    return Response(ScenarioRunSerializer(run).data)
