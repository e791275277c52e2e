from fastapi import APIRouter, HTTPException, status

from schemas import CaseInfo
from solver.cases import CASES, COMPACT, COMPACT_DESCRIPTION, Model, get_case
from solver.errors import ConfigurationError

router = APIRouter(prefix="/cases", tags=["cases"])


def _info(name: str) -> CaseInfo:
    if name == COMPACT:
        return CaseInfo(
            name=COMPACT, default_model=Model.NS.value, has_exact_solution=False, description=COMPACT_DESCRIPTION
        )
    case = get_case(name)
    return CaseInfo(
        name=case.name, default_model=case.model.value, has_exact_solution=True, description=case.description
    )


@router.get("", response_model=list[CaseInfo])
async def list_cases():
    """Available cases with their exact solutions"""
    return [_info(name) for name in sorted(CASES)] + [_info(COMPACT)]


@router.get("/{name}", response_model=CaseInfo)
async def get_case_info(name: str):
    try:
        return _info(name)
    except ConfigurationError as exc:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=str(exc))
