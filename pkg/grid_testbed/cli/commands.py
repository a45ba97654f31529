"""
The user commands: ngsub, ngstat, ngget, ngcancel, ngclean and ngls.

Identity and defaults come from the environment:
    NG_SUBJECT   the user's certificate subject (required)
    NG_GIIS      URL of the GIIS to query
    NG_RC        URL of the replica catalog
    NG_JOBLIST   the job list file, ~/.ngjobs by default

Exit codes: 0 success, 1 user error, 2 remote error. Errors are one line on stderr.
"""
import argparse
import os
import sys
from dataclasses import dataclass
from typing import Optional

import pandas as pd

from grid_testbed.broker.joblist import JobList
from grid_testbed.broker.matching import candidates_frame
from grid_testbed.broker.ui import JobNotFound, SubmissionError, UserInterface
from grid_testbed.infomodel.entries import serialize_entries
from grid_testbed.infomodel.filters import FilterParseError, filter_parse, MATCH_ALL
from grid_testbed.utils.pandas_utils import console_settings, frame_to_lines
from grid_testbed.wire.protocol import valid_subject
from grid_testbed.wire.transport import RemoteError, TcpTransport
from grid_testbed.xrsl.job_description import parse_job
from grid_testbed.xrsl.parser import XrslError

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_REMOTE_ERROR = 2


class UsageError(Exception):
    pass


@dataclass
class ClientEnvironment:
    subject: str
    giis: str = ''
    rc: str = ''
    joblist: Optional[str] = None

    @classmethod
    def from_environ(cls, environ=None):
        environ = os.environ if environ is None else environ
        subject = environ.get('NG_SUBJECT', '')
        if not subject:
            raise UsageError('NG_SUBJECT is not set')
        if not valid_subject(subject):
            raise UsageError('NG_SUBJECT %r is not a certificate subject' % subject)
        return cls(subject, environ.get('NG_GIIS', ''), environ.get('NG_RC', ''),
                   environ.get('NG_JOBLIST') or None)


def read_local_files(job, xrsl_path):
    """the inputs the user uploads, read from the directory holding the xRSL file"""
    base = os.path.dirname(os.path.abspath(xrsl_path))
    files = {}
    for name in job.uploads:
        path = os.path.join(base, name)
        if not os.path.isfile(path):
            raise UsageError('input %s not found next to %s' % (name, xrsl_path))
        with open(path, 'rb') as f:
            files[name] = f.read()
    return files


def cmd_ngsub(args: argparse.Namespace, ui, out) -> int:
    with open(args.xrsl, encoding='utf-8') as f:
        job = parse_job(f.read())
    if args.dryrun:
        console_settings()
        print(frame_to_lines(candidates_frame(ui.rank(job, args.giis))), file=out)
        return EXIT_OK
    gridid = ui.submit_best(job, read_local_files(job, args.xrsl), args.giis)
    print(gridid, file=out)
    return EXIT_OK


def cmd_ngstat(args: argparse.Namespace, ui, out) -> int:
    if args.all:
        gridids = [gridid for gridid, _ in ui.joblist.items()]
        frame = pd.DataFrame([{'gridid': g, 'state': ui.status(g, args.giis)} for g in gridids],
                             columns=['gridid', 'state'])
        console_settings()
        print(frame_to_lines(frame), file=out)
        return EXIT_OK
    if not args.gridid:
        raise UsageError('a grid id or --all is required')
    print('%s %s' % (args.gridid, ui.status(args.gridid, args.giis)), file=out)
    return EXIT_OK


def cmd_ngget(args: argparse.Namespace, ui, out) -> int:
    os.makedirs(args.dir, exist_ok=True)
    for path in ui.fetch_outputs(args.gridid, args.dir):
        print(path, file=out)
    return EXIT_OK


def cmd_ngcancel(args: argparse.Namespace, ui, out) -> int:
    ui.cancel(args.gridid)
    print('%s cancel requested' % args.gridid, file=out)
    return EXIT_OK


def cmd_ngclean(args: argparse.Namespace, ui, out) -> int:
    ui.clean(args.gridid)
    print('%s clean requested' % args.gridid, file=out)
    return EXIT_OK


def cmd_ngls(args: argparse.Namespace, ui, out) -> int:
    f = filter_parse(args.filter) if args.filter else MATCH_ALL
    entries, partial = ui.query(f, args.giis)
    print(serialize_entries(entries), end='', file=out)
    if partial:
        print('warning: partial result, some resources did not answer', file=args.err)
    return EXIT_OK


class _ArgumentParser(argparse.ArgumentParser):
    """writes help to the command's out and usage errors as one line to its err"""

    def __init__(self, prog, out, err):
        super().__init__(prog=prog)
        self.out = out
        self.err = err

    def print_help(self, file=None):
        super().print_help(file or self.out)

    def print_usage(self, file=None):
        super().print_usage(file or self.out)

    def error(self, message):
        print('%s: %s' % (self.prog, message), file=self.err)
        raise SystemExit(EXIT_USER_ERROR)


def _parser(command, out=None, err=None):
    ap = _ArgumentParser(command, out or sys.stdout, err or sys.stderr)
    if command == 'ngsub':
        ap.add_argument('xrsl', help='xRSL job description file')
        ap.add_argument('--dryrun', action='store_true',
                        help='print the ranked candidates with rejection reasons, submit nothing')
        ap.set_defaults(func=cmd_ngsub)
    elif command == 'ngstat':
        ap.add_argument('gridid', nargs='?', default='')
        ap.add_argument('--all', action='store_true', help='every job in the job list')
        ap.set_defaults(func=cmd_ngstat)
    elif command == 'ngget':
        ap.add_argument('gridid')
        ap.add_argument('dir')
        ap.set_defaults(func=cmd_ngget)
    elif command in ('ngcancel', 'ngclean'):
        ap.add_argument('gridid')
        ap.set_defaults(func=cmd_ngcancel if command == 'ngcancel' else cmd_ngclean)
    elif command == 'ngls':
        ap.add_argument('--filter', default='', help='LDAP-style search filter')
        ap.set_defaults(func=cmd_ngls)
    else:
        raise ValueError('unknown command %s' % command)
    if command in ('ngsub', 'ngstat', 'ngls'):
        ap.add_argument('--giis', default=None, help='GIIS URL, overrides NG_GIIS')
    else:
        ap.set_defaults(giis=None)
    return ap


def run(command, argv=None, transport=None, environ=None, out=None, err=None) -> int:
    """
    Runs one user command.
    :param transport: TCP by default, tests pass a fleet's in-process transport
    :param environ: mapping read instead of os.environ
    """
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = _parser(command, out, err).parse_args(argv)
        args.err = err
    except SystemExit as e:
        return EXIT_USER_ERROR if e.code else EXIT_OK
    try:
        env = ClientEnvironment.from_environ(environ)
        ui = UserInterface(env.subject, transport or TcpTransport('ui'),
                           giis_url=env.giis, rc_url=env.rc, joblist=JobList(env.joblist))
        return args.func(args, ui, out)
    except RemoteError as e:
        print('%s: %s' % (command, e), file=err)
        return EXIT_REMOTE_ERROR
    except (UsageError, SubmissionError, JobNotFound, XrslError, FilterParseError, OSError) as e:
        print('%s: %s' % (command, e), file=err)
        return EXIT_USER_ERROR


def _main(command):
    sys.exit(run(command, sys.argv[1:]))


def ngsub():
    _main('ngsub')


def ngstat():
    _main('ngstat')


def ngget():
    _main('ngget')


def ngcancel():
    _main('ngcancel')


def ngclean():
    _main('ngclean')


def ngls():
    _main('ngls')
