"""
Domain/Feature Modules Package

This package contains all feature modules organized by domain.
Each module is self-contained with its own schemas and service code:

- tensor:     tensors, tape and reverse-mode differentiation
- data:       BPE, IOB tags, interleaving, vocabularies, corpus files
- model:      attentional encoder-decoder and checkpoints
- strategies: baseline, interleaved and multitask integration of syntax
- training:   Adam, validation, early stopping, best-k retention
- inference:  beam search, ensembles, post-processing
- evaluation: BLEU, bootstrap significance, construct/length breakdowns
- experiment: experiment config and the pipeline subcommands
"""
