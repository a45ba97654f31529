"""
Accounting of every wire exchange: which role sent how many bytes to which,
and whether the bytes were file payload or control traffic.
"""
import threading
from dataclasses import dataclass, asdict

import pandas as pd

PEER_TO_PEER_EDGES = frozenset({
    frozenset({'ui', 'cluster'}),
    frozenset({'ui', 'se'}),
    frozenset({'cluster', 'se'}),
})

COLUMNS = ['from_role', 'to_role', 'bytes', 'purpose', 'verb', 'target']


@dataclass(frozen=True)
class TransferRow:
    from_role: str
    to_role: str
    bytes: int
    purpose: str
    verb: str = ''
    target: str = ''


class TransferLedger:

    def __init__(self):
        self.rows = []
        self._lock = threading.Lock()

    def record(self, from_role, to_role, n_bytes, purpose, verb='', target=''):
        if purpose not in ('control', 'payload'):
            raise ValueError('purpose must be control or payload, got %r' % purpose)
        with self._lock:
            self.rows.append(TransferRow(from_role, to_role, n_bytes, purpose, verb, target))

    def clear(self):
        with self._lock:
            self.rows = []

    def frame(self):
        with self._lock:
            return pd.DataFrame([asdict(row) for row in self.rows], columns=COLUMNS)

    def summary(self):
        """bytes and message counts per (from, to, purpose)"""
        df = self.frame()
        return (df.groupby(['from_role', 'to_role', 'purpose'])['bytes']
                .agg(['sum', 'count'])
                .rename(columns={'sum': 'bytes', 'count': 'messages'})
                .reset_index())

    def payload_bytes(self, role=None):
        df = self.frame()
        df = df[df.purpose == 'payload']
        if role is not None:
            df = df[(df.from_role == role) | (df.to_role == role)]
        return int(df['bytes'].sum())

    def violations(self):
        """payload rows outside the direct ui / cluster / se edges"""
        with self._lock:
            return [row for row in self.rows if row.purpose == 'payload'
                    and frozenset({row.from_role, row.to_role}) not in PEER_TO_PEER_EDGES]
