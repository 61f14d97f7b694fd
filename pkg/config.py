import os
from dataclasses import dataclass
from typing import Optional
from dotenv import load_dotenv


@dataclass
class Settings:
    EMBED_DIM: int
    EPOCHS: int
    BATCH_SIZE: int
    LEARNING_RATE: float
    BETA: float
    OUTPUT_DIR: str
    SEED: int = 0
    THREADS: int = 1
    LR_END: Optional[float] = None
    T_START: float = 1.0
    T_END: float = 1e-3
    RELATION_MODE: str = "affine"
    USE_LOC: bool = True
    USE_VOL: bool = True
    NORMALIZED_LOSS: bool = True
    ENSEMBLE_SIZE: int = 10
    QUERY_FRACTION: float = 0.3
    REPEATS: int = 1
    PMP_VARIANT: str = "standard"
    GEN_CONCEPTS: int = 20
    GEN_ROLES: int = 2
    GEN_DOMAIN: int = 1000
    LOG_LEVEL: str = "INFO"


def _flag(name: str, default: bool) -> bool:
    return os.getenv(name, "true" if default else "false").lower() == "true"


def get_settings(env: Optional[str] = None) -> Settings:
    env = (env or os.getenv("APP_ENV") or os.getenv("ENV") or "dev").lower()
    if env not in {"prod", "dev", "test"}:
        env = "dev"

    load_dotenv()
    dotenv_file = f".env.{env}"
    if os.path.exists(dotenv_file):
        load_dotenv(dotenv_file)

    if env == "test":
        default_dim = 4
        default_epochs = 5
        default_batch = 64
        default_ensemble = 3
        default_concepts, default_domain = 6, 60
        default_output = "runs/test"
    elif env == "dev":
        # 中等规模语料上表现最好的一组超参数
        default_dim = 16
        default_epochs = 30
        default_batch = 256
        default_ensemble = 10
        default_concepts, default_domain = 20, 1000
        default_output = "runs"
    else:
        output_dir = os.getenv("OUTPUT_DIR")
        if not output_dir:
            raise ValueError("OUTPUT_DIR must be set for prod environment")
        default_dim = int(os.getenv("EMBED_DIM", "16"))
        default_epochs = int(os.getenv("EPOCHS", "30"))
        default_batch = int(os.getenv("BATCH_SIZE", "256"))
        default_ensemble = int(os.getenv("ENSEMBLE_SIZE", "10"))
        default_concepts, default_domain = 20, 1000
        default_output = output_dir

    lr_end = os.getenv("LR_END")
    return Settings(
        EMBED_DIM=int(os.getenv("EMBED_DIM", str(default_dim))),
        EPOCHS=int(os.getenv("EPOCHS", str(default_epochs))),
        BATCH_SIZE=int(os.getenv("BATCH_SIZE", str(default_batch))),
        LEARNING_RATE=float(os.getenv("LEARNING_RATE", "0.05")),
        BETA=float(os.getenv("BETA", "10")),
        OUTPUT_DIR=os.getenv("OUTPUT_DIR", default_output),
        SEED=int(os.getenv("SEED", "0")),
        THREADS=int(os.getenv("THREADS", "1")),
        LR_END=float(lr_end) if lr_end else None,
        T_START=float(os.getenv("T_START", "1.0")),
        T_END=float(os.getenv("T_END", "1e-3")),
        # affine | translation，translation 冻结对角阵为单位阵（消融实验）
        RELATION_MODE=os.getenv("RELATION_MODE", "affine"),
        USE_LOC=_flag("USE_LOC", True),
        USE_VOL=_flag("USE_VOL", True),
        NORMALIZED_LOSS=_flag("NORMALIZED_LOSS", True),
        ENSEMBLE_SIZE=int(os.getenv("ENSEMBLE_SIZE", str(default_ensemble))),
        QUERY_FRACTION=float(os.getenv("QUERY_FRACTION", "0.3")),
        REPEATS=int(os.getenv("REPEATS", "1")),
        PMP_VARIANT=os.getenv("PMP_VARIANT", "standard"),
        GEN_CONCEPTS=int(os.getenv("GEN_CONCEPTS", str(default_concepts))),
        GEN_ROLES=int(os.getenv("GEN_ROLES", "2")),
        GEN_DOMAIN=int(os.getenv("GEN_DOMAIN", str(default_domain))),
        LOG_LEVEL=os.getenv("LOG_LEVEL", "INFO").upper(),
    )
