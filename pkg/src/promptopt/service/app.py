"""FastAPI application over a loaded OptimizerRuntime."""
from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import PromptOptError
from ..runtime import OptimizerRuntime
from .schemas import (
    CompleteRequest,
    CompleteResponse,
    EvalRequest,
    EvalResponse,
    GraphRequest,
    GraphResponse,
    HealthResponse,
    MetricsRequest,
    MetricsResponse,
    OptimizeRequest,
    OptimizeResponse,
    RewardRequest,
    RewardResponse,
    RuntimeInfoResponse,
    TrainRequest,
    TrainResponse,
)


def create_app(runtime: OptimizerRuntime) -> FastAPI:
    app = FastAPI(title="promptopt", version=__version__)

    @app.exception_handler(PromptOptError)
    def domain_error(request, exc: PromptOptError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(version=__version__)

    @app.get("/runtime", response_model=RuntimeInfoResponse)
    def runtime_info():
        return RuntimeInfoResponse(**runtime.info())

    @app.post("/optimize", response_model=OptimizeResponse)
    def optimize(request: OptimizeRequest):
        return runtime.optimize(
            request.query,
            k_max=request.k_max,
            mode=request.mode,
            call_env=request.call_env,
            sample_seed=request.sample_seed,
        )

    @app.post("/inspect-graph", response_model=GraphResponse)
    def inspect_graph(request: GraphRequest):
        return runtime.inspect_graph(query=request.query, full=request.full)

    @app.post("/complete", response_model=CompleteResponse)
    def complete(request: CompleteRequest):
        return runtime.complete(request.prompt, request.max_tokens, request.temperature)

    @app.post("/score/reward", response_model=RewardResponse)
    def score_reward(request: RewardRequest):
        scored = runtime.score_reward(request.expected, request.generated)
        return RewardResponse(
            reward=scored["reward"],
            fuzzy=scored["fuzzy"],
            embedding=scored["embedding"],
            blend_weight=scored["lambda"],
        )

    @app.post("/score/metrics", response_model=MetricsResponse)
    def score_metrics(request: MetricsRequest):
        return runtime.score_metrics([(pair.reference, pair.candidate) for pair in request.pairs])

    @app.post("/train", response_model=TrainResponse)
    def train_endpoint(request: TrainRequest):
        return runtime.run_training(resume=request.resume)

    @app.post("/eval", response_model=EvalResponse)
    def eval_endpoint(request: EvalRequest):
        return runtime.run_evaluation(split_name=request.split, mode=request.mode, limit=request.limit)

    return app
