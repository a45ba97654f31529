"""
Service daemons: ng-cluster, ng-se, ng-rc and ng-giis serve one kind of service
from a fleet configuration over TCP; ng-demo boots a whole fleet in one process
and runs the echo job through it.
"""
import argparse
import logging
import os
import sys
import tempfile
import threading

from grid_testbed.cli.fleet_config import FleetConfigError, load_fleet
from grid_testbed.harness.demo import write_demo_fleet
from grid_testbed.harness.fleet import DEMO_SUBJECTS, Fleet
from grid_testbed.harness.taskflow import run_taskflow
from grid_testbed.lrms.pbs_simulator import Defaults as LrmsDefaults
from grid_testbed.utils import logging_config
from grid_testbed.utils.clock import WallClock
from grid_testbed.utils.pandas_utils import console_settings, frame_to_lines
from grid_testbed.wire.transport import TcpTransport
from grid_testbed.xrsl.job_description import parse_job
from grid_testbed.xrsl.parser import XrslError

logger = logging.getLogger(__name__)


def serve_fleet(config, kind, names=None, stop_event=None, period=None):
    """
    Serves the configured services of one kind until stop_event is set,
    re-registering with parent GIISes and driving clusters every period.
    """
    fleet = Fleet(config, clock=WallClock(),
                  transport=TcpTransport('harness', roles=config.endpoints()),
                  kinds=(kind,), names=names)
    if not fleet.services:
        raise FleetConfigError('no %s services configured%s' % (
            kind, ' named %s' % ', '.join(names) if names else ''))
    stop_event = stop_event or threading.Event()
    period = LrmsDefaults.tick_seconds if period is None else period
    fleet.serve()
    try:
        while not stop_event.wait(period):
            try:
                fleet.tick()
            except Exception:
                logger.exception('%s tick failed', kind)
    finally:
        fleet.shutdown()
    return fleet


def _daemon(kind, argv=None):
    ap = argparse.ArgumentParser(prog='ng-%s' % kind)
    ap.add_argument('config', help='fleet configuration (INI)')
    ap.add_argument('--name', action='append', default=None,
                    help='serve only these %s services (repeatable)' % kind)
    args = ap.parse_args(argv)
    logging_config.config()
    try:
        config = load_fleet(args.config)
        serve_fleet(config, kind, args.name)
    except (FleetConfigError, OSError) as e:
        print('ng-%s: %s' % (kind, e), file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        logger.info('ng-%s stopped', kind)
    return 0


def run_demo(directory, xrsl_path=None, subject=DEMO_SUBJECTS[0], out=None, max_steps=600):
    """
    Boots the fleet described in `directory`/fleet.ini in-process and runs one job through it.
    :return: the transcript and the fleet
    """
    out = out or sys.stdout
    config = load_fleet(os.path.join(directory, 'fleet.ini'))
    xrsl_path = xrsl_path or os.path.join(directory, 'echo.xrsl')
    with open(xrsl_path, encoding='utf-8') as f:
        job = parse_job(f.read())
    local_files = {}
    for name in job.uploads:
        with open(os.path.join(os.path.dirname(os.path.abspath(xrsl_path)), name), 'rb') as f:
            local_files[name] = f.read()

    fleet = Fleet(config)
    try:
        transcript = run_taskflow(fleet, job, subject, local_files, max_steps=max_steps)
    finally:
        fleet.shutdown()

    console_settings()
    for line in transcript.lines(with_time=True):
        print(line, file=out)
    if transcript.failed_step:
        print('failed at: %s' % transcript.failed_step, file=out)
    elif transcript.failure_reason:
        print('job failed: %s' % transcript.failure_reason, file=out)
    print(frame_to_lines(fleet.ledger.summary()), file=out)
    violations = fleet.ledger.violations()
    print('peer-to-peer violations: %d' % len(violations), file=out)
    return transcript, fleet


def demo_main(argv=None):
    ap = argparse.ArgumentParser(prog='ng-demo')
    ap.add_argument('directory', nargs='?', default=None,
                    help='directory with fleet.ini and echo.xrsl, a fresh demo fleet when omitted')
    ap.add_argument('--xrsl', default=None, help='job to run instead of echo.xrsl')
    args = ap.parse_args(argv)
    logging_config.config(logging.WARNING)
    try:
        if args.directory:
            transcript, fleet = run_demo(args.directory, args.xrsl)
        else:
            with tempfile.TemporaryDirectory() as directory:
                write_demo_fleet(directory)
                transcript, fleet = run_demo(directory, args.xrsl)
    except (FleetConfigError, XrslError, OSError) as e:
        print('ng-demo: %s' % e, file=sys.stderr)
        return 1
    ok = transcript.ok and transcript.final_state == 'FINISHED' and not fleet.ledger.violations()
    return 0 if ok else 1


def cluster_main():
    sys.exit(_daemon('cluster'))


def se_main():
    sys.exit(_daemon('se'))


def rc_main():
    sys.exit(_daemon('rc'))


def giis_main():
    sys.exit(_daemon('giis'))


def ng_demo():
    sys.exit(demo_main())
