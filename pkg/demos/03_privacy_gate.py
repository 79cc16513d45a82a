"""Walkthrough: what the privacy boundary lets through and what it stops.

Outbound payloads have no field capable of carrying a raster; on top of that,
field names are whitelisted per purpose and heuristics catch smuggled
encodings. Every attempt, allowed or rejected, lands in the audit log first.
"""

from pathlib import Path

from surgdistill.imaging import MaskSummary
from surgdistill.privacy import AuditLog, GateRejection, OutboundPayload, PrivacyGate, Purpose

gate = PrivacyGate(AuditLog(Path("demo_output/audit.log")))

summary = MaskSummary(
    centroid=(0.31, 0.42), bbox=(0.2, 0.3, 0.45, 0.55), area_fraction=0.04,
    grid=tuple(tuple(0 for _ in range(8)) for _ in range(4)), region_label="center left",
)

attempts = [
    ("legitimate synthesis context",
     OutboundPayload(Purpose.SYNTHESIZE,
                     {"anatomy": "duodenum", "phase": "CME dissection",
                      "cme_side": "left", "template_id": "sft-00"}, summary)),
    ("raster smuggled in an unknown field",
     OutboundPayload(Purpose.SYNTHESIZE, {"anatomy": "duodenum", "frame_pixels": "377 514"}, summary)),
    ("base64 blob inside a whitelisted field",
     OutboundPayload(Purpose.JUDGE_QUALITY,
                     {"candidate": "iVBORw0KGgo" * 100, "reference": "ok", "prompt": "p"})),
    ("data-URI smuggling",
     OutboundPayload(Purpose.JUDGE_QUALITY,
                     {"candidate": "data:image/png;base64,AAAA", "reference": "ok", "prompt": "p"})),
    ("non-binary occupancy grid",
     OutboundPayload(Purpose.SYNTHESIZE, {"anatomy": "pancreas"},
                     MaskSummary((0.5, 0.5), (0, 0, 1, 1), 0.5, ((0, 7),), "center"))),
]

for label, payload in attempts:
    try:
        sanitized = gate.submit(payload, destination="demo-teacher")
        print(f"ALLOWED  {label}  ({len(sanitized.serialized)} bytes, digest {sanitized.digest[:12]})")
    except GateRejection as rejection:
        print(f"REJECTED {label}  -> {rejection.reason}")

print("\naudit trail:")
for record in gate.audit_log.read():
    print(f"  {record.decision:<8} {record.purpose:<14} {record.payload_bytes:>6} B  "
          f"{record.rejection_reason or ''}")
