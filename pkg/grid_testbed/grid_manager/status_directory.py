"""
The Grid Manager's control directory: <control>/jobs/<gridid>/ holds one small
file per field ("status", "desc", "owner", "errors", ...). Every file is
replaced atomically, and all records can be rebuilt from the directory alone.
"""
import logging
import os
import shutil

from grid_testbed.grid_manager.records import JobRecord, JobState
from grid_testbed.utils.atomic import atomic_write_text
from grid_testbed.xrsl.job_description import parse_job, serialize
from grid_testbed.xrsl.parser import XrslError

logger = logging.getLogger(__name__)

_OPTIONAL_INTS = ('local', 'exitcode')


class StatusDirectory:

    def __init__(self, control_dir):
        self.control_dir = control_dir
        self.jobs_dir = os.path.join(control_dir, 'jobs')
        os.makedirs(self.jobs_dir, exist_ok=True)

    def job_dir(self, gridid):
        return os.path.join(self.jobs_dir, gridid)

    def _write(self, gridid, name, value):
        atomic_write_text(os.path.join(self.job_dir(gridid), name), value)

    def _read(self, gridid, name, default=''):
        try:
            with open(os.path.join(self.job_dir(gridid), name), encoding='utf-8') as f:
                return f.read()
        except FileNotFoundError:
            return default

    def create(self, record: JobRecord):
        """writes all fields, the status file last"""
        self._write(record.gridid, 'desc', serialize(record.job) + '\n')
        self._write(record.gridid, 'owner', record.owner + '\n')
        self._write(record.gridid, 'queue', record.queue + '\n')
        self._write(record.gridid, 'session', record.session_dir + '\n')
        self._write(record.gridid, 'created', '%r\n' % record.created)
        self._write(record.gridid, 'lifetime', '%d\n' % record.lifetime)
        self.save(record)

    def save(self, record: JobRecord):
        """persists the mutable fields, the status file last"""
        gridid = record.gridid
        self._write(gridid, 'local', '' if record.local_id is None else '%d\n' % record.local_id)
        self._write(gridid, 'exitcode', '' if record.exit_code is None else '%d\n' % record.exit_code)
        self._write(gridid, 'errors', record.failure_reason + '\n' if record.failure_reason else '')
        self._write(gridid, 'clean', 'yes\n' if record.clean_requested else '')
        self._write(gridid, 'modified', '%r\n' % record.modified)
        self._write(gridid, 'status', record.state.value + '\n')

    def save_local_id(self, record: JobRecord):
        self._write(record.gridid, 'local', '%d\n' % record.local_id)

    def load(self, gridid):
        status = self._read(gridid, 'status').strip()
        if not status:
            raise ValueError('job %s has no status file' % gridid)
        ints = {}
        for name in _OPTIONAL_INTS:
            text = self._read(gridid, name).strip()
            ints[name] = int(text) if text else None
        return JobRecord(
            gridid=gridid,
            owner=self._read(gridid, 'owner').strip(),
            job=parse_job(self._read(gridid, 'desc')),
            state=JobState(status),
            session_dir=self._read(gridid, 'session').strip(),
            queue=self._read(gridid, 'queue').strip(),
            local_id=ints['local'],
            exit_code=ints['exitcode'],
            failure_reason=self._read(gridid, 'errors').strip(),
            created=float(self._read(gridid, 'created', '0') or 0),
            modified=float(self._read(gridid, 'modified', '0') or 0),
            lifetime=int(self._read(gridid, 'lifetime', '0') or 0),
            clean_requested=bool(self._read(gridid, 'clean').strip()),
        )

    def load_all(self):
        records = []
        for gridid in sorted(os.listdir(self.jobs_dir)):
            try:
                records.append(self.load(gridid))
            except (ValueError, XrslError, OSError) as e:
                # a job killed before its status file was written never got acknowledged
                logger.warning('discarding incomplete job record %s: %s', gridid, e)
                shutil.rmtree(self.job_dir(gridid), ignore_errors=True)
        return records

    def remove(self, gridid):
        shutil.rmtree(self.job_dir(gridid), ignore_errors=True)

    def script_path(self, gridid):
        return os.path.join(self.job_dir(gridid), 'script')

    # the grid id counter outlives removed jobs

    def save_counter(self, value):
        atomic_write_text(os.path.join(self.control_dir, 'counter'), '%d\n' % value)

    def load_counter(self):
        try:
            with open(os.path.join(self.control_dir, 'counter'), encoding='utf-8') as f:
                return int(f.read().strip() or 0)
        except (FileNotFoundError, ValueError):
            return 0
