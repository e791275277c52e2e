import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from config import configure_logging, get_settings
from routers import cases, runs

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    # Startup
    settings = get_settings()
    configure_logging(settings.log_level)
    logger.info(f"RMAC service started, outputs under {settings.output_dir}")
    yield
    # Shutdown
    logger.info("RMAC service stopped")

app = FastAPI(
    title="RMAC Staggered-Grid Flow Solver",
    description="Pressure-robust RMAC/MAC experiments for Stokes and Navier-Stokes on non-uniform grids",
    version="1.0.0",
    lifespan=lifespan
)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(cases.router)
app.include_router(runs.router)

@app.get("/")
async def root():
    return {"message": "RMAC Staggered-Grid Flow Solver API"}

@app.get("/health")
async def health_check():
    return {"status": "healthy"}
