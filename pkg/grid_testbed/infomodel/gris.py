"""
Information providers of a cluster: at query time the cluster state, its
queues, authorized users and jobs are rendered as a subtree of entries.
"""
import time
from dataclasses import dataclass, field
from typing import List

from grid_testbed.infomodel import entries as dn
from grid_testbed.infomodel.entries import Entry


@dataclass
class QueueState:
    name: str
    max_cputime: int
    max_memory: int
    max_disk: int
    cpus: int = 0
    running: int = 0
    queued: int = 0
    # per-user view
    free_cpus_for_user: int = 0
    effective_queue_length: int = 0

    @property
    def free_cpus(self):
        return max(0, self.cpus - self.running)


@dataclass
class ClusterState:
    name: str
    country: str = 'localhost'
    aliases: List[str] = field(default_factory=list)
    total_cpus: int = 0
    free_cpus: int = 0
    runtimeenvironments: frozenset = frozenset()
    local_se_paths: List[str] = field(default_factory=list)
    queues: List[QueueState] = field(default_factory=list)
    authorized: List[str] = field(default_factory=list)
    contact: str = ''
    session_free_mb: int = 0
    session_total_mb: int = 0

    def __post_init__(self):
        if not 0 <= self.free_cpus <= self.total_cpus:
            raise ValueError('free cpus %d outside [0, %d]' % (self.free_cpus, self.total_cpus))

    @property
    def dn(self):
        return dn.cluster_dn(self.name, self.country)


def _timestamp(seconds):
    return time.strftime('%Y-%m-%dT%H:%M:%SZ', time.gmtime(seconds))


def cluster_entry(cluster: ClusterState, n_jobs=0):
    return Entry.create(
        cluster.dn, 'nordugrid-cluster',
        nordugrid_cluster_name=cluster.name,
        nordugrid_cluster_aliasname=cluster.aliases,
        nordugrid_cluster_contactstring=cluster.contact,
        nordugrid_cluster_totalcpus=cluster.total_cpus,
        nordugrid_cluster_freecpus=cluster.free_cpus,
        nordugrid_cluster_runtimeenvironment=cluster.runtimeenvironments,
        nordugrid_cluster_localse=cluster.local_se_paths,
        nordugrid_cluster_sessiondir_free=cluster.session_free_mb,
        nordugrid_cluster_sessiondir_total=cluster.session_total_mb,
        nordugrid_cluster_totaljobs=n_jobs,
    )


def queue_entry(cluster: ClusterState, queue: QueueState):
    return Entry.create(
        dn.queue_dn(cluster.dn, queue.name), 'nordugrid-pbsqueue',
        nordugrid_pbsqueue_name=queue.name,
        nordugrid_pbsqueue_maxcputime=queue.max_cputime,
        nordugrid_pbsqueue_maxmemory=queue.max_memory,
        nordugrid_pbsqueue_maxdisk=queue.max_disk,
        nordugrid_pbsqueue_totalcpus=queue.cpus,
        nordugrid_pbsqueue_running=queue.running,
        nordugrid_pbsqueue_queued=queue.queued,
    )


def info_group_entry(parent, group):
    return Entry.create(dn.group_dn(parent, group), 'nordugrid-info-group',
                        nordugrid_info_group_name=group)


def authuser_entry(users_group, subject, free_cpus, queue_length, disk_mb):
    return Entry.create(
        dn.user_dn(users_group, subject), 'nordugrid-authuser',
        nordugrid_authuser_name=subject,
        nordugrid_authuser_sn=subject,
        nordugrid_authuser_freecpus=free_cpus,
        nordugrid_authuser_queuelength=queue_length,
        nordugrid_authuser_diskspace=disk_mb,
    )


def pbsjob_entry(jobs_group, record):
    entry = Entry.create(
        dn.job_dn(jobs_group, record.gridid), 'nordugrid-pbsjob',
        nordugrid_pbsjob_globalid=record.gridid,
        nordugrid_pbsjob_globalowner=record.owner,
        nordugrid_pbsjob_status=record.status,
        nordugrid_pbsjob_queue=record.queue,
        nordugrid_pbsjob_submissiontime=_timestamp(record.created),
    )
    if record.job.jobname:
        entry.add('nordugrid-pbsjob-jobname', record.job.jobname)
    if record.exit_code is not None and record.is_terminal:
        entry.add('nordugrid-pbsjob-exitcode', record.exit_code)
    if record.failure_reason:
        entry.add('nordugrid-pbsjob-errors', record.failure_reason)
    return entry


def gris_snapshot(cluster: ClusterState, jobs, users):
    """
    The cluster subtree: cluster entry, one entry per queue, under each queue
    the "jobs" and "users" info groups holding one entry per job in that queue
    and one per authorized subject. Deleted jobs are not shown.
    """
    jobs = [job for job in jobs if job.visible]
    users = list(dict.fromkeys(users))
    entries = [cluster_entry(cluster, n_jobs=len(jobs))]
    for queue in cluster.queues:
        q_entry = queue_entry(cluster, queue)
        jobs_group = info_group_entry(q_entry.dn, 'jobs')
        users_group = info_group_entry(q_entry.dn, 'users')
        entries.extend([q_entry, jobs_group, users_group])

        free_for_user = min(queue.free_cpus, cluster.free_cpus)
        for subject in users:
            entries.append(authuser_entry(users_group.dn, subject, free_for_user,
                                          queue.queued, min(queue.max_disk, cluster.session_free_mb)))
        for record in jobs:
            if record.queue == queue.name:
                entries.append(pbsjob_entry(jobs_group.dn, record))
    return entries
