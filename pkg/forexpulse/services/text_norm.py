"""Tweet text normalization shared by the stance featurizer and forensics."""

import re

URL_TOKEN = "<url>"
USER_TOKEN = "<user>"

URL_PATTERN = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
MENTION_PATTERN = re.compile(r"@\w+")

# Placeholders first so "<url>" survives as one token; cashtags keep their "$".
TOKEN_PATTERN = re.compile(r"<url>|<user>|\$\w+|\w+(?:[.,']\w+)*")
LETTER_RUN_PATTERN = re.compile(r"[^\W\d_]+")


def replace_urls(text: str) -> str:
    """Replace every URL with the fixed token ``<url>``."""
    return URL_PATTERN.sub(URL_TOKEN, text)


def has_url(text: str) -> bool:
    return URL_PATTERN.search(text) is not None


def normalize_tweet(text: str) -> str:
    """Lowercase, and replace URLs and user mentions with placeholder tokens."""
    text = replace_urls(text)
    text = MENTION_PATTERN.sub(USER_TOKEN, text)
    return text.lower()


def tokenize(normalized: str) -> list[str]:
    return TOKEN_PATTERN.findall(normalized)


def letter_words(text: str) -> list[str]:
    """Lowercase words made of letters only; digits and punctuation split words."""
    return LETTER_RUN_PATTERN.findall(text.lower())
