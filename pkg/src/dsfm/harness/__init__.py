"""Instance files, image ingestion, benchmarks and the command-line interface."""

from .bench import BenchmarkConfig, BenchmarkResult, run_benchmark
from .cli import cli_main
from .imaging import ImageParams, grid_counts, image_to_instance, read_image, write_image
from .instance_io import ParseError, dump_instance, load_instance, parse_instance, write_instance

__all__ = [
    "BenchmarkConfig",
    "BenchmarkResult",
    "ImageParams",
    "ParseError",
    "cli_main",
    "dump_instance",
    "grid_counts",
    "image_to_instance",
    "load_instance",
    "parse_instance",
    "read_image",
    "run_benchmark",
    "write_image",
    "write_instance",
]
