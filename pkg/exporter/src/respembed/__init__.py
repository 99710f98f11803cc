"""respembed: response-only embedding export for preference-pair selection."""

from .export import ExportJob, ExportResult, export_embeddings
from .formats import read_groups, write_embeddings_binary, write_embeddings_text

__version__ = "0.1.0"
