"""Run traces: everything the auditors need, serialisable as line-delimited JSON."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class RunTrace:
    config: dict = field(default_factory=dict)
    honest: list[int] = field(default_factory=list)
    corrupt: list[int] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)
    #: (send_time, recv_time, sender, receiver) for honest-to-honest traffic
    deliveries: list[tuple[int, int, int, int]] = field(default_factory=list)
    #: (slot, sender) -> [messages, bytes]
    traffic: dict[tuple[int, int], list[int]] = field(default_factory=dict)
    logs: dict[int, list[dict]] = field(default_factory=dict)
    flags: list[dict] = field(default_factory=list)
    aborted: str | None = None
    end_time: int = 0
    events: int = 0

    def of(self, what: str):
        return [r for r in self.records if r["what"] == what]

    def lines(self):
        yield {"type": "header", "config": self.config, "honest": self.honest,
               "corrupt": self.corrupt}
        for r in self.records:
            yield {"type": "record", **r}
        for d in self.deliveries:
            yield {"type": "delivery", "d": list(d)}
        for (slot, sender), (msgs, nbytes) in sorted(self.traffic.items()):
            yield {"type": "traffic", "slot": slot, "sender": sender, "messages": msgs, "bytes": nbytes}
        for rid in sorted(self.logs):
            for entry in self.logs[rid]:
                yield {"type": "log", "replica": rid, **entry}
        for fl in self.flags:
            yield {"type": "flag", **fl}
        yield {"type": "footer", "aborted": self.aborted, "end_time": self.end_time,
               "events": self.events}

    def serialize(self) -> str:
        return "".join(json.dumps(x, sort_keys=True, separators=(",", ":")) + "\n" for x in self.lines())

    def digest(self) -> str:
        """Digest of everything except the header, i.e. of the run's outputs."""
        h = hashlib.sha256()
        for x in self.lines():
            if x["type"] != "header":
                h.update(json.dumps(x, sort_keys=True, separators=(",", ":")).encode())
        return h.hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(self.serialize())

    @classmethod
    def load(cls, path) -> "RunTrace":
        tr = cls()
        with open(path) as fh:
            for line in fh:
                x = json.loads(line)
                kind = x.pop("type")
                if kind == "header":
                    tr.config, tr.honest, tr.corrupt = x["config"], x["honest"], x["corrupt"]
                elif kind == "record":
                    tr.records.append(x)
                elif kind == "delivery":
                    tr.deliveries.append(tuple(x["d"]))
                elif kind == "traffic":
                    tr.traffic[(x["slot"], x["sender"])] = [x["messages"], x["bytes"]]
                elif kind == "log":
                    tr.logs.setdefault(x.pop("replica"), []).append(x)
                elif kind == "flag":
                    tr.flags.append(x)
                elif kind == "footer":
                    tr.aborted, tr.end_time, tr.events = x["aborted"], x["end_time"], x["events"]
        for rid in tr.honest:
            tr.logs.setdefault(rid, [])
        return tr
