"""
Matchmaking of a job against discovered (cluster, queue) pairs, and the
reassembly of cluster views from information system entries.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import pandas as pd

from grid_testbed.infomodel.entries import parent_dn
from grid_testbed.infomodel.gris import ClusterState, QueueState
from grid_testbed.wire.protocol import authorize

logger = logging.getLogger(__name__)

REQUIREMENTS = ('cputime', 'memory', 'disk', 'runtimeenvironment', 'queue', 'authorization')


@dataclass
class ResourceCandidate:
    cluster: ClusterState
    queue: QueueState
    rejection_reasons: List[str] = field(default_factory=list)

    @property
    def feasible(self):
        return not self.rejection_reasons

    @property
    def rank_key(self):
        return (-self.queue.free_cpus_for_user, self.queue.effective_queue_length,
                self.cluster.name, self.queue.name)


@dataclass
class ResolvedInput:
    name: str
    chosen_pfn: str
    alternatives: Tuple[str, ...]

    def __post_init__(self):
        if self.chosen_pfn not in self.alternatives:
            raise ValueError('chosen replica %s is not among the alternatives' % self.chosen_pfn)


def clusters_from_entries(entries, subject):
    """
    Rebuilds cluster views from cluster, queue and authuser entries by DN.
    The per-user queue figures come from the first authuser entry of the
    queue whose name pattern admits the subject.
    """
    clusters = {}
    for entry in entries:
        if entry.objectclass == 'nordugrid-cluster':
            clusters[entry.dn] = ClusterState(
                name=entry.first('nordugrid-cluster-name', ''),
                country=parent_dn(entry.dn).split(',')[0].partition('=')[2],
                aliases=entry.get('nordugrid-cluster-aliasname'),
                total_cpus=entry.number('nordugrid-cluster-totalcpus'),
                free_cpus=min(entry.number('nordugrid-cluster-freecpus'),
                              entry.number('nordugrid-cluster-totalcpus')),
                runtimeenvironments=frozenset(entry.get('nordugrid-cluster-runtimeenvironment')),
                local_se_paths=entry.get('nordugrid-cluster-localse'),
                contact=entry.first('nordugrid-cluster-contactstring', ''),
                session_free_mb=entry.number('nordugrid-cluster-sessiondir-free'),
                session_total_mb=entry.number('nordugrid-cluster-sessiondir-total'))

    queues = {}
    personalized = set()
    for entry in entries:
        if entry.objectclass == 'nordugrid-pbsqueue' and parent_dn(entry.dn) in clusters:
            queue = QueueState(
                name=entry.first('nordugrid-pbsqueue-name', ''),
                max_cputime=entry.number('nordugrid-pbsqueue-maxcputime'),
                max_memory=entry.number('nordugrid-pbsqueue-maxmemory'),
                max_disk=entry.number('nordugrid-pbsqueue-maxdisk'),
                cpus=entry.number('nordugrid-pbsqueue-totalcpus'),
                running=entry.number('nordugrid-pbsqueue-running'),
                queued=entry.number('nordugrid-pbsqueue-queued'))
            queues[entry.dn] = queue
            clusters[parent_dn(entry.dn)].queues.append(queue)

    for entry in entries:
        if entry.objectclass != 'nordugrid-authuser':
            continue
        queue_dn = parent_dn(parent_dn(entry.dn))
        queue = queues.get(queue_dn)
        if queue is None:
            continue
        cluster = clusters[parent_dn(queue_dn)]
        pattern = entry.first('nordugrid-authuser-name', '')
        if pattern not in cluster.authorized:
            cluster.authorized.append(pattern)
        if queue_dn not in personalized and authorize(subject, [pattern]):
            queue.free_cpus_for_user = entry.number('nordugrid-authuser-freecpus')
            queue.effective_queue_length = entry.number('nordugrid-authuser-queuelength')
            personalized.add(queue_dn)

    for cluster in clusters.values():
        cluster.queues.sort(key=lambda q: q.name)
    return sorted(clusters.values(), key=lambda c: c.name)


def evaluate(job, cluster, queue, subject):
    """A candidate with one reason per requirement the pair violates."""
    reasons = []
    if job.cputime > queue.max_cputime:
        reasons.append('cputime %d > %d' % (job.cputime, queue.max_cputime))
    if job.memory > queue.max_memory:
        reasons.append('memory %d > %d' % (job.memory, queue.max_memory))
    if job.disk > queue.max_disk:
        reasons.append('disk %d > %d' % (job.disk, queue.max_disk))
    missing = sorted(set(job.runtimeenvironment) - set(cluster.runtimeenvironments))
    if missing:
        reasons.append('runtimeenvironment %s missing' % ','.join(missing))
    if job.queue and job.queue != queue.name:
        reasons.append('queue %s requested' % job.queue)
    if not authorize(subject, cluster.authorized):
        reasons.append('authorization %s not admitted' % subject)
    return ResourceCandidate(cluster, queue, reasons)


def rank(job, clusters, subject):
    """Every (cluster, queue) pair, feasible ones first, each group by rank key."""
    candidates = [evaluate(job, cluster, queue, subject)
                  for cluster in clusters for queue in cluster.queues]
    return sorted(candidates, key=lambda c: (not c.feasible, c.rank_key))


def match(job, clusters, subject):
    return [c for c in rank(job, clusters, subject) if c.feasible]


def rejected_requirements(candidate):
    return [reason.split()[0] for reason in candidate.rejection_reasons]


def candidates_frame(candidates):
    return pd.DataFrame(
        [{'cluster': c.cluster.name,
          'queue': c.queue.name,
          'free_cpus': c.queue.free_cpus_for_user,
          'queue_length': c.queue.effective_queue_length,
          'feasible': 'yes' if c.feasible else 'no',
          'reasons': '; '.join(c.rejection_reasons) or '-'}
         for c in candidates],
        columns=['cluster', 'queue', 'free_cpus', 'queue_length', 'feasible', 'reasons'])
