import os
from pathlib import Path
from dotenv import load_dotenv
from config import get_settings
from services.generator import generate
from services.parser import save_tbox


def main():
    load_dotenv()
    settings = get_settings()
    corpus = Path(settings.OUTPUT_DIR) / "corpus"
    corpus.mkdir(parents=True, exist_ok=True)
    count = int(os.getenv("CORPUS_SIZE", "5"))
    for i in range(count):
        seed = settings.SEED + i
        target = corpus / f"gen_{seed}.tbox"
        if target.exists():
            continue
        gt, t = generate(settings.GEN_CONCEPTS, settings.GEN_ROLES, settings.GEN_DOMAIN, seed)
        save_tbox(t, target)
        gt.save(corpus / f"gen_{seed}.truth.json")


if __name__ == "__main__":
    main()
