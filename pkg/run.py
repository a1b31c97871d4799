#!/usr/bin/env python3
"""
Empathy & Emotion Toolkit - Main Entry Point

    python run.py synth --task track2 --n 700 --seed 11 --out corpus.tsv
    python run.py train --config configs/track2.cfg --train corpus.tsv --out runs/t2
    python run.py evaluate --model runs/t2 --data corpus.tsv
"""

import sys

from app.main import run

if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
