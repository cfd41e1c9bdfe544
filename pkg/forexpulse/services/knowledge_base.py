"""Editable default data shipped in ``knowledge/``."""

import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import Optional

from forexpulse.errors import ConfigError
from forexpulse.models.schemas import DEFAULT_LEXICON, RecommendationLexicon

logger = logging.getLogger(__name__)

KNOWLEDGE_DIR = Path(__file__).resolve().parent.parent.parent / "knowledge"


class KnowledgeBase:
    """
    Loads the trading lexicon and the synthetic text pools.

    Files are read lazily and cached on first use. A missing lexicon
    file falls back to the built-in word list.
    """

    def __init__(self, knowledge_dir: Optional[Path] = None):
        """
        Initialize the knowledge base.

        Args:
            knowledge_dir: Directory holding the JSON files.
                           Defaults to the project's knowledge/ directory
        """
        self.knowledge_dir = Path(knowledge_dir) if knowledge_dir else KNOWLEDGE_DIR
        self._cache: dict[str, dict] = {}

    def _load(self, name: str) -> dict:
        if name not in self._cache:
            path = self.knowledge_dir / name
            if path.exists():
                try:
                    with open(path, "r", encoding="utf-8") as f:
                        self._cache[name] = json.load(f)
                except json.JSONDecodeError as e:
                    raise ConfigError(f"{path}: invalid JSON ({e})", module="knowledge") from e
            else:
                logger.debug("Knowledge file %s not found", path)
                self._cache[name] = {}
        return self._cache[name]

    @property
    def group_rules_path(self) -> Path:
        return self.knowledge_dir / "group_rules.conf"

    def lexicon(self) -> RecommendationLexicon:
        """Recommendation vocabulary from trading_lexicon.json."""
        words = self._load("trading_lexicon.json").get("recommendation_words")
        return RecommendationLexicon(words=words or list(DEFAULT_LEXICON))

    def templates(self) -> dict:
        """Text pools for the synthetic corpus generator."""
        pools = self._load("synthetic_templates.json")
        if not pools:
            raise ConfigError(
                f"no synthetic templates in {self.knowledge_dir}", module="knowledge"
            )
        return pools


@lru_cache
def get_knowledge_base() -> KnowledgeBase:
    return KnowledgeBase()
