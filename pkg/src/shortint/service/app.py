"""FastAPI service wrapping the experiment runner and a few direct computations.

The process keeps warm prime tables between requests, so repeated
experiments against one server skip the table rebuilds.  Error mapping:
usage problems -> 400, verification failures (broken exact identities) ->
409, accuracy-budget failures -> 422.
"""
from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import AccuracyError, UsageError, VerificationError
from ..experiments import run
from ..multfun import find_t0, get_spec, mertens_product
from ..restrict import rho_sigma
from . import schemas

EXPERIMENT_DESCRIPTIONS = {
    "sieve": "factorization oracle cross-checks and exact divisor-sum identities",
    "scan": "per-x short-interval discrepancy profile for one (X, h)",
    "variance": "mean squared discrepancy across a grid of window lengths",
    "exceptional": "fraction of windows deviating beyond eta times the normalizer",
    "asymptotics": "k^omega sums, their leading constant, and omega concentration",
    "halasz": "distance profile, minimizing twist, Mertens product, thresholds",
    "dirichlet": "polynomial mean values, large values, amplification, contour windows",
    "ramare": "exact five-piece decomposition of a restricted coefficient sum",
    "threshold": "window-length exponent scan around the critical exponent",
}


def create_app() -> FastAPI:
    app = FastAPI(title="shortint service", version=__version__)

    @app.exception_handler(UsageError)
    async def usage_handler(request: Request, exc: UsageError):
        return JSONResponse(status_code=400, content={"kind": "usage", "message": str(exc)})

    @app.exception_handler(VerificationError)
    async def verification_handler(request: Request, exc: VerificationError):
        return JSONResponse(
            status_code=409, content={"kind": "verification", "message": str(exc)}
        )

    @app.exception_handler(AccuracyError)
    async def accuracy_handler(request: Request, exc: AccuracyError):
        return JSONResponse(status_code=422, content={"kind": "accuracy", "message": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/experiments", response_model=list[schemas.ExperimentInfo])
    def experiments():
        return [
            schemas.ExperimentInfo(name=name, description=desc)
            for name, desc in EXPERIMENT_DESCRIPTIONS.items()
        ]

    @app.get("/specs", response_model=schemas.SpecListResponse)
    def specs():
        from ..multfun import REGISTRY_FORMS

        examples = []
        for name in ("dk:1", "dk:2", "dk:3", "dk_twist:2:3.0", "omega_pow:2", "rough:2:10:1000"):
            s = get_spec(name)
            examples.append(
                schemas.SpecInfo(
                    name=s.name, bound_k=s.bound_k, real=s.real_flag, kind=s.value_kind
                )
            )
        return schemas.SpecListResponse(forms=list(REGISTRY_FORMS), examples=examples)

    @app.post("/experiments/run", response_model=schemas.RunResponse)
    def run_experiment(req: schemas.RunRequest):
        result = run(req.config, strict=req.strict)
        return schemas.RunResponse(
            manifest=result.manifest,
            checks=[schemas.CheckModel(**c) for c in result.checks],
            results=result.results,
            files=result.files,
            exit_code=result.exit_code,
        )

    @app.post("/compute/rho-sigma", response_model=schemas.RhoSigmaResponse)
    def compute_rho_sigma(req: schemas.RhoSigmaRequest):
        return schemas.RhoSigmaResponse(**rho_sigma(req.k, req.alpha))

    @app.post("/compute/mertens-product", response_model=schemas.MertensResponse)
    def compute_mertens(req: schemas.MertensRequest):
        spec = get_spec(req.spec_name)
        return schemas.MertensResponse(
            spec_name=req.spec_name, x=req.x, value=mertens_product(spec, req.x)
        )

    @app.post("/compute/t0", response_model=schemas.T0Response)
    def compute_t0(req: schemas.T0Request):
        spec = get_spec(req.spec_name)
        window = tuple(req.window) if req.window else (-10.0, 10.0)
        prof = find_t0(spec, req.X, window=window, coarse_step=req.coarse_step)
        return schemas.T0Response(
            spec_name=req.spec_name,
            X=req.X,
            t0=prof.t0,
            d2_at_t0=prof.d2_at_t0,
            reason=prof.reason,
            boundary_attained=prof.boundary_attained,
            final_step=prof.final_step,
            ties=prof.ties,
        )

    return app


app = create_app()
