import enum
import secrets
from dataclasses import dataclass, field
from typing import Optional

from grid_testbed.xrsl.job_description import JobDescription


class JobState(str, enum.Enum):
    ACCEPTED = 'ACCEPTED'
    PREPARING = 'PREPARING'
    INLRMS_Q = 'INLRMS_Q'
    INLRMS_R = 'INLRMS_R'
    FINISHING = 'FINISHING'
    FINISHED = 'FINISHED'
    FAILED = 'FAILED'
    CANCELING = 'CANCELING'
    DELETED = 'DELETED'

    @property
    def label(self):
        """the status shown by the information system, e.g. INLRMS:R"""
        return self.value.replace('INLRMS_', 'INLRMS:')

    @property
    def terminal(self):
        return self in (JobState.FINISHED, JobState.FAILED, JobState.DELETED)


class JobEvent(str, enum.Enum):
    ADMIT = 'admit'                 # request accepted, start preparing
    STAGED = 'staged'               # inputs in place and job handed to the LRMS
    LRMS_RUNNING = 'lrms-running'
    LRMS_EXITED = 'lrms-exited'
    STAGED_OUT = 'staged-out'
    CANCEL = 'cancel'
    CANCELLED = 'cancelled'         # LRMS side of a cancellation done
    FAILURE = 'failure'
    EXPIRE = 'expire'               # lifetime exceeded or clean requested


S, E = JobState, JobEvent

TRANSITIONS = {
    S.ACCEPTED: {E.ADMIT: S.PREPARING, E.CANCEL: S.CANCELING, E.FAILURE: S.FAILED},
    S.PREPARING: {E.STAGED: S.INLRMS_Q, E.CANCEL: S.CANCELING, E.FAILURE: S.FAILED},
    S.INLRMS_Q: {E.LRMS_RUNNING: S.INLRMS_R, E.CANCEL: S.CANCELING, E.FAILURE: S.FAILED},
    S.INLRMS_R: {E.LRMS_EXITED: S.FINISHING, E.CANCEL: S.CANCELING, E.FAILURE: S.FAILED},
    S.FINISHING: {E.STAGED_OUT: S.FINISHED, E.CANCEL: S.CANCELING, E.FAILURE: S.FAILED},
    S.CANCELING: {E.CANCELLED: S.FAILED},
    S.FINISHED: {E.EXPIRE: S.DELETED},
    S.FAILED: {E.EXPIRE: S.DELETED},
    S.DELETED: {},
}

LEGAL_TRANSITIONS = frozenset(
    (old, new) for old, edges in TRANSITIONS.items() for new in edges.values())


def next_state(state, event):
    """the state an event leads to, None when the event is illegal in that state"""
    return TRANSITIONS[JobState(state)].get(JobEvent(event))


def new_gridid(host, counter):
    return '%s:%d-%s' % (host, counter, secrets.token_hex(3))


@dataclass
class JobRecord:
    gridid: str
    owner: str
    job: JobDescription
    state: JobState = JobState.ACCEPTED
    session_dir: str = ''
    queue: str = ''
    local_id: Optional[int] = None
    exit_code: Optional[int] = None
    failure_reason: str = ''
    created: float = 0.0
    modified: float = 0.0
    lifetime: int = 0
    clean_requested: bool = False
    # not persisted: redone after a restart
    downloads_done: bool = field(default=False, compare=False)

    @property
    def status(self):
        return self.state.label

    @property
    def is_terminal(self):
        return self.state.terminal

    @property
    def visible(self):
        return self.state != JobState.DELETED
