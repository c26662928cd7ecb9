from __future__ import annotations

from contextlib import contextmanager
from typing import Annotated

from fastapi import APIRouter, Depends, HTTPException, Request, status
from venom_core.core.module_data_policy import ensure_module_mutation_allowed

from venom_module_regulation_enforcement.api.schemas import (
    NashAnalysisRequest,
    NashAnalysisResponse,
    RunCreateRequest,
    RunCreateResponse,
    RunIndexEntry,
    RunsResponse,
)
from venom_module_regulation_enforcement.engine.detector import (
    ClassifierTrainingError,
    DatasetConstructionError,
)
from venom_module_regulation_enforcement.engine.gametheory import EgtaCellError
from venom_module_regulation_enforcement.engine.gridworld import (
    ContractViolationError,
    WorldConstructionError,
)
from venom_module_regulation_enforcement.services.experiments import ConfigParseError
from venom_module_regulation_enforcement.services.service import (
    ExperimentService,
    RunNotFoundError,
    TrainingBudgetExceededError,
    get_experiment_service,
    health_payload,
)
from venom_module_regulation_enforcement.services.settings import (
    MODULE_ID,
    RegulationEnforcementSettings,
)


def _module_data_guard(request: Request) -> None:
    if request.method in {"POST", "PUT", "PATCH", "DELETE"}:
        try:
            ensure_module_mutation_allowed(
                module_id=MODULE_ID,
                operation_name=f"{request.method.lower()}:{request.url.path}",
            )
        except PermissionError as exc:
            raise HTTPException(
                status_code=status.HTTP_403_FORBIDDEN,
                detail=str(exc),
            ) from exc


router = APIRouter(
    prefix="/api/v1/regulation-enforcement",
    tags=["regulation-enforcement"],
    dependencies=[Depends(_module_data_guard)],
)


@contextmanager
def _run_not_found_as_http_404():
    try:
        yield
    except RunNotFoundError as exc:
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND,
            detail="Run not found",
        ) from exc


@contextmanager
def _experiment_errors_as_http():
    try:
        yield
    except (
        ConfigParseError,
        TrainingBudgetExceededError,
        ContractViolationError,
        WorldConstructionError,
        DatasetConstructionError,
    ) as exc:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail=str(exc),
        ) from exc
    except (ClassifierTrainingError, EgtaCellError) as exc:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=str(exc),
        ) from exc


@router.get("/health")
async def health() -> dict[str, str]:
    return health_payload()


def _feature_guard() -> None:
    if not RegulationEnforcementSettings.from_env().feature_enabled:
        raise HTTPException(
            status_code=status.HTTP_403_FORBIDDEN,
            detail="Regulation Enforcement feature disabled",
        )


ServiceDep = Annotated[ExperimentService, Depends(get_experiment_service)]
FeatureDep = Annotated[None, Depends(_feature_guard)]


@router.post("/analysis/nash", response_model=NashAnalysisResponse)
def analyze_nash(
    payload: NashAnalysisRequest,
    _feature: FeatureDep,
    service: ServiceDep,
) -> NashAnalysisResponse:
    with _experiment_errors_as_http():
        return NashAnalysisResponse(analysis=service.analyze(payload.matrix))


@router.get("/runs", response_model=RunsResponse)
def list_runs(_feature: FeatureDep, service: ServiceDep) -> RunsResponse:
    items = service.list_runs()
    return RunsResponse(count=len(items), items=items)


@router.get(
    "/runs/{run_id}",
    response_model=RunIndexEntry,
    responses={404: {"description": "Run not found"}},
)
def get_run(run_id: str, _feature: FeatureDep, service: ServiceDep) -> RunIndexEntry:
    with _run_not_found_as_http_404():
        return service.get_run(run_id)


@router.post("/runs", response_model=RunCreateResponse)
def create_run(
    payload: RunCreateRequest,
    _feature: FeatureDep,
    service: ServiceDep,
) -> RunCreateResponse:
    with _experiment_errors_as_http():
        entry, report = service.run_bounded(
            payload.config,
            scale=payload.scale,
            emit=payload.emit,
        )
    return RunCreateResponse(entry=entry, report=report)
