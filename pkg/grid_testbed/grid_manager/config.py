import os
from dataclasses import dataclass, field
from typing import List, Optional

from grid_testbed.lrms.pbs_simulator import QueueConfig


class Defaults:
    lifetime = 3600
    upload_timeout = 60.0
    retries = 3
    backoff = 1.0
    ttl = 30.0


@dataclass
class ClusterConfig:
    name: str
    host: str = 'localhost'
    port: int = 0
    country: str = 'localhost'
    cpus: int = 1
    queues: List[QueueConfig] = field(default_factory=list)
    gridmap: List[str] = field(default_factory=list)
    runtimeenvironments: List[str] = field(default_factory=list)
    local_se_paths: List[str] = field(default_factory=list)
    session_root: str = ''
    control_dir: str = ''
    rc_url: str = ''
    parent_giis: Optional[str] = None
    ttl: float = Defaults.ttl
    lifetime: int = Defaults.lifetime
    upload_timeout: float = Defaults.upload_timeout
    retries: int = Defaults.retries
    backoff: float = Defaults.backoff
    notify_log: str = ''
    aliases: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.queues:
            raise ValueError('cluster %s: at least one queue is required' % self.name)
        if self.cpus <= 0:
            raise ValueError('cluster %s: cpus must be positive' % self.name)
        if self.retries < 1:
            raise ValueError('cluster %s: retries must be at least 1' % self.name)

    @property
    def endpoint(self):
        return '%s:%d' % (self.host, self.port)

    @property
    def contact(self):
        return 'ngp://%s' % self.endpoint

    def make_dirs(self):
        for path in (self.session_root, self.control_dir, *self.local_se_paths):
            os.makedirs(path, exist_ok=True)


def read_gridmap(path):
    """one subject pattern per line, '#' comments"""
    with open(path, encoding='utf-8') as f:
        return [line.strip() for line in f if line.strip() and not line.startswith('#')]
