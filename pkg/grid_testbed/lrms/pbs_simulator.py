"""
A PBS-like local resource manager: named queues with limits, a fixed pool of
CPU slots, FIFO start order inside a queue and round-robin across queues.
Jobs are real subprocesses running their script inside the session directory.
"""
import itertools
import logging
import os
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Dict, Optional

import psutil

from grid_testbed.utils.clock import WallClock

logger = logging.getLogger(__name__)

EXIT_CPUTIME_EXCEEDED = 152
EXIT_DELETED = 153

QUEUED, RUNNING, EXITED = 'Q', 'R', 'E'


class Defaults:
    tick_seconds = 0.1


class LrmsError(Exception):
    pass


@dataclass(frozen=True)
class QueueConfig:
    name: str
    max_cputime: int
    max_memory: int
    max_disk: int
    cpus: int

    def __post_init__(self):
        for attr in ('max_cputime', 'max_memory', 'max_disk', 'cpus'):
            if getattr(self, attr) <= 0:
                raise ValueError('queue %s: %s must be positive' % (self.name, attr))

    @classmethod
    def parse(cls, text):
        """'name:max_cputime:max_memory:max_disk:cpus'"""
        parts = text.strip().split(':')
        if len(parts) != 5:
            raise ValueError('queue spec %r: expected name:max_cputime:max_memory:max_disk:cpus'
                             % text)
        name, *numbers = parts
        return cls(name, *(int(n) for n in numbers))


@dataclass(frozen=True)
class JobLimits:
    cputime: int = 0
    memory: int = 0
    disk: int = 0


@dataclass
class LocalJob:
    local_id: int
    script: str
    workdir: str
    queue: str
    limits: JobLimits
    name: str = ''
    state: str = QUEUED
    exit_code: Optional[int] = None
    submitted: float = 0.0
    started: Optional[float] = None
    ended: Optional[float] = None
    stdout: str = ''
    stderr: str = ''
    process: Optional[subprocess.Popen] = field(default=None, repr=False, compare=False)

    @property
    def pid(self):
        return self.process.pid if self.process is not None else None


def _kill_tree(process):
    """kills the job process and everything it spawned, then reaps it"""
    try:
        parent = psutil.Process(process.pid)
        victims = parent.children(recursive=True) + [parent]
    except psutil.NoSuchProcess:
        victims = []
    for victim in victims:
        try:
            victim.kill()
        except psutil.NoSuchProcess:
            pass
    psutil.wait_procs(victims, timeout=5)
    try:
        process.wait(timeout=5)
    except subprocess.TimeoutExpired:
        logger.error('process %d survived SIGKILL', process.pid)


def _exit_code(returncode):
    return 128 - returncode if returncode < 0 else returncode


class PbsSimulator:
    """
    One scheduler owns all job state, every operation is serialized by its lock.
    cputime limits are enforced as wall time measured on the injected clock;
    memory is recorded but not enforced.
    """

    def __init__(self, queues, total_cpus, clock=None):
        if total_cpus <= 0:
            raise ValueError('total_cpus must be positive')
        self.queues = {q.name: q for q in queues}
        if not self.queues:
            raise ValueError('at least one queue is required')
        self.total_cpus = total_cpus
        self.clock = clock or WallClock()
        self.jobs: Dict[int, LocalJob] = {}
        self._ids = itertools.count(1)
        self._by_name = {}
        self._rr = 0
        self._lock = threading.RLock()

    # submission and control

    def qsub(self, script, workdir, queue, limits=JobLimits(), name='', stdout='', stderr=''):
        """
        Enqueues a job. Submissions carrying the name of an already known job
        return that job's id instead of enqueueing twice.
        :raises LrmsError: unknown queue or a limit above the queue maximum
        """
        with self._lock:
            if name and name in self._by_name:
                return self._by_name[name]
            q = self.queues.get(queue)
            if q is None:
                raise LrmsError('unknown queue %r' % queue)
            for attr, maximum in (('cputime', q.max_cputime), ('memory', q.max_memory),
                                  ('disk', q.max_disk)):
                if getattr(limits, attr) > maximum:
                    raise LrmsError('%s %d exceeds queue %s maximum %d'
                                    % (attr, getattr(limits, attr), queue, maximum))
            local_id = next(self._ids)
            self.jobs[local_id] = LocalJob(local_id, script, workdir, queue, limits, name,
                                           submitted=self.clock.now(),
                                           stdout=stdout, stderr=stderr)
            if name:
                self._by_name[name] = local_id
            logger.debug('qsub %d (%s) to %s', local_id, name, queue)
            return local_id

    def qstat(self, local_id=None):
        with self._lock:
            if local_id is None:
                return list(self.jobs.values())
            if local_id not in self.jobs:
                raise LrmsError('unknown job id %r' % local_id)
            return self.jobs[local_id]

    def find(self, name):
        with self._lock:
            local_id = self._by_name.get(name)
            return self.jobs.get(local_id) if local_id is not None else None

    def qdel(self, local_id):
        with self._lock:
            job = self.jobs.get(local_id)
            if job is None:
                raise LrmsError('unknown job id %r' % local_id)
            if job.state == RUNNING:
                _kill_tree(job.process)
            if job.state != EXITED:
                self._finish(job, EXIT_DELETED)
                logger.info('qdel %d', local_id)

    def purge(self, name):
        """
        Forgets an exited job, after which its name may be submitted again.
        :return: False when the job is unknown or has not exited
        """
        with self._lock:
            local_id = self._by_name.get(name)
            job = self.jobs.get(local_id) if local_id is not None else None
            if job is None or job.state != EXITED:
                return False
            del self.jobs[local_id]
            del self._by_name[name]
            return True

    # scheduling

    def running(self, queue=None):
        with self._lock:
            return [j for j in self.jobs.values()
                    if j.state == RUNNING and (queue is None or j.queue == queue)]

    def queued(self, queue=None):
        with self._lock:
            return [j for j in self.jobs.values()
                    if j.state == QUEUED and (queue is None or j.queue == queue)]

    def free_cpus(self):
        return self.total_cpus - len(self.running())

    def scheduler_tick(self, now=None):
        """
        Reaps finished processes, kills jobs over their cputime, then starts queued
        jobs while slots are free.
        :return: list of (local_id, old state, new state)
        """
        with self._lock:
            now = self.clock.now() if now is None else now
            transitions = []
            for job in self.running():
                returncode = job.process.poll()
                if returncode is not None:
                    self._finish(job, _exit_code(returncode), now)
                    transitions.append((job.local_id, RUNNING, EXITED))
                elif now - job.started > self._cputime_limit(job):
                    logger.info('job %d exceeded its cputime, killing', job.local_id)
                    _kill_tree(job.process)
                    self._finish(job, EXIT_CPUTIME_EXCEEDED, now)
                    transitions.append((job.local_id, RUNNING, EXITED))

            while len(self.running()) < self.total_cpus:
                job = self._next_to_start()
                if job is None:
                    break
                self._start(job, now)
                transitions.append((job.local_id, QUEUED, job.state))
            return transitions

    def _cputime_limit(self, job):
        return job.limits.cputime or self.queues[job.queue].max_cputime

    def _next_to_start(self):
        names = list(self.queues)
        for offset in range(len(names)):
            name = names[(self._rr + offset) % len(names)]
            if len(self.running(name)) >= self.queues[name].cpus:
                continue
            waiting = self.queued(name)
            if waiting:
                self._rr = (self._rr + offset + 1) % len(names)
                return min(waiting, key=lambda j: j.local_id)
        return None

    def _start(self, job, now):
        env = {
            'PATH': os.environ.get('PATH', os.defpath),
            'HOME': job.workdir,
            'TMPDIR': job.workdir,
            'PBS_JOBID': str(job.local_id),
            'PBS_QUEUE': job.queue,
        }
        try:
            stdout = open(job.stdout, 'ab') if job.stdout else subprocess.DEVNULL
            stderr = open(job.stderr, 'ab') if job.stderr else subprocess.DEVNULL
            try:
                job.process = subprocess.Popen(
                    ['/bin/sh', job.script], cwd=job.workdir, env=env,
                    stdin=subprocess.DEVNULL, stdout=stdout, stderr=stderr,
                    start_new_session=True)
            finally:
                for stream in (stdout, stderr):
                    if stream is not subprocess.DEVNULL:
                        stream.close()
        except OSError as e:
            logger.error('job %d failed to start: %s', job.local_id, e)
            self._finish(job, 127, now)
            return
        job.state = RUNNING
        job.started = now
        logger.debug('job %d started, pid %d', job.local_id, job.process.pid)

    def _finish(self, job, exit_code, now=None):
        job.state = EXITED
        job.exit_code = exit_code
        job.ended = self.clock.now() if now is None else now

    def shutdown(self):
        with self._lock:
            for job in self.running():
                _kill_tree(job.process)
                self._finish(job, EXIT_DELETED)


def process_alive(pid):
    """whether a job process is still running (zombies count as dead)"""
    try:
        return psutil.Process(pid).status() != psutil.STATUS_ZOMBIE
    except psutil.NoSuchProcess:
        return False
