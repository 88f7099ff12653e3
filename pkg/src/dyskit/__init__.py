"""Speech biomarker extraction and multilingual dysarthria severity classification."""

__version__ = "0.1.0"
