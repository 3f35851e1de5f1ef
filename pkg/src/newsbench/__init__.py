"""newsbench: turn a rolling window of news into versioned QA benchmarks and
score language models on them with and without retrieval."""

__version__ = "0.1.0"
