"""The recorded wire transcripts are the contract real trainer plugins code
against; this pins the serializer output to the recorded bytes."""
import sys
from pathlib import Path

from nars.protocol import parse_request, serialize_request

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "scripts"))
from record_golden_transcripts import smoke_space, transcript_requests  # noqa: E402

GOLDEN = Path(__file__).parent / "golden" / "transcripts.jsonl"


def test_serializer_reproduces_golden_lines():
    space = smoke_space()
    recorded = GOLDEN.read_text().splitlines()
    produced = [serialize_request(req, space) for req in transcript_requests()]
    assert produced == recorded


def test_golden_lines_parse_back():
    for line in GOLDEN.read_text().splitlines():
        req, units = parse_request(line)
        assert req.epoch_budget == 2
        assert units["lr"] == 1e-3
        assert units["lr_sgd_multiplier"] == 4.0
