"""Bridge from pretrained CNNs to adpm tensor workspaces."""

from .export import ConfigurationError, ExporterError, ExportJob, export_conv_features, export_manifest
from .models import load_model, tiny_cnn

__version__ = "0.1.0"
