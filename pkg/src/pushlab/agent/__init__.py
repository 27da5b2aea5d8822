from .extractors import GruExtractor, StackedExtractor, VpmExtractor, extract_features, make_extractor
from .her import Episode, EpisodeReplay, her_relabel
from .sac import SacAgent, SacConfig
from .variants import VARIANTS, AgentVariant, get_variant

__all__ = [
    "AgentVariant", "Episode", "EpisodeReplay", "GruExtractor", "SacAgent", "SacConfig", "StackedExtractor",
    "VARIANTS", "VpmExtractor", "extract_features", "get_variant", "her_relabel", "make_extractor",
]
