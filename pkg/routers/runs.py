import logging
from typing import Callable

from fastapi import APIRouter, HTTPException, status
from fastapi.concurrency import run_in_threadpool

from cli import CommandResult, cmd_conserve, cmd_converge, cmd_robust, cmd_solve, summarize
from config import get_settings
from schemas import (
    ConserveConfig,
    ConserveResponse,
    ConvergeConfig,
    ErrorRecordResponse,
    RobustConfig,
    RunConfig,
    SolveConfig,
    SolveResponse,
    StudyResponse,
)
from solver.errors import ConfigurationError, GridError, SolverError

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/runs", tags=["runs"])


async def _execute(command: Callable[..., CommandResult], config: RunConfig) -> CommandResult:
    """Runs a command off the event loop; files are written only when ``out`` is given"""
    try:
        return await run_in_threadpool(command, config, get_settings(), config.out is not None)
    except (ConfigurationError, GridError) as exc:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(exc))
    except SolverError as exc:
        logger.error(f"Run failed: {exc}")
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(exc))


def _records(result: CommandResult):
    return [ErrorRecordResponse.model_validate(r) for r in result.records]


@router.post("/solve", response_model=SolveResponse)
async def solve(config: SolveConfig):
    """One run: errors against the exact solution and the conservation audit"""
    result = await _execute(cmd_solve, config)
    return SolveResponse(
        record=_records(result)[0],
        conservation=summarize(result.conservation),
        files=[str(p) for p in result.files],
    )


@router.post("/converge", response_model=StudyResponse)
async def converge(config: ConvergeConfig):
    result = await _execute(cmd_converge, config)
    return StudyResponse(records=_records(result), tables=result.tables, files=[str(p) for p in result.files])


@router.post("/robust", response_model=StudyResponse)
async def robust(config: RobustConfig):
    result = await _execute(cmd_robust, config)
    return StudyResponse(records=_records(result), files=[str(p) for p in result.files])


@router.post("/conserve", response_model=ConserveResponse)
async def conserve(config: ConserveConfig):
    result = await _execute(cmd_conserve, config)
    records = _records(result)
    return ConserveResponse(
        conservation=summarize(result.conservation),
        record=records[0] if records else None,
        files=[str(p) for p in result.files],
    )
