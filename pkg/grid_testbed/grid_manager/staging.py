"""
File movement of the Grid Manager: inputs into the session directory and
outputs out of it. Remote storage elements are reached over the wire, local
ones (file: URLs under a configured mount) by plain file copy.
"""
import logging
import os
import shutil
import time
from urllib.parse import urlsplit, parse_qs

import psutil

from grid_testbed.replica_catalog.catalog import register as rc_register
from grid_testbed.storage.file_store import FileStore
from grid_testbed.storage.storage_element import SCHEME as SE_SCHEME, get_file, put_file
from grid_testbed.wire.transport import RemoteError, ServiceError

logger = logging.getLogger(__name__)

MB = 1024 * 1024


class StagingError(Exception):
    """A file could not be moved, the message is the job's failure reason."""


def with_retries(func, retries, backoff, what):
    """
    Calls func up to `retries` times, sleeping `backoff` seconds in between.
    :raises StagingError: after the last failed attempt
    """
    for attempt in range(1, retries + 1):
        try:
            return func()
        except (RemoteError, OSError) as e:
            logger.warning('%s: attempt %d/%d failed: %s', what, attempt, retries, e)
            if attempt < retries and backoff > 0:
                time.sleep(backoff)
    raise StagingError(what)


def split_destination(url):
    """'ngse://h:p/path?lfn=name' -> ('ngse://h:p/path', 'name' or '')"""
    parts = urlsplit(url)
    lfn = parse_qs(parts.query).get('lfn', [''])[0]
    return parts._replace(query='', fragment='').geturl(), lfn


def local_path(url, mounts):
    """
    The filesystem path of a file: URL, which must lie under one of the
    local storage element mounts.
    :return: (mount, path relative to the mount)
    """
    path = os.path.realpath(urlsplit(url).path)
    for mount in mounts:
        mount = os.path.realpath(mount)
        if path.startswith(mount + os.sep):
            return mount, os.path.relpath(path, mount)
    raise StagingError('%s is not on a local storage element' % url)


def free_mb(path):
    return psutil.disk_usage(path).free // MB


def check_disk(job, session_dir):
    if job.disk and free_mb(session_dir) < job.disk:
        raise StagingError('insufficient disk space: %d MB required' % job.disk)


def fetch_input(transport, session: FileStore, name, source, subject, mounts,
                retries=3, backoff=1.0):
    """Puts one input into the session directory."""
    scheme = urlsplit(source).scheme
    what = 'stage-in failed: %s' % name
    if scheme == SE_SCHEME:
        data = with_retries(lambda: get_file(transport, source, subject), retries, backoff, what)
        session.put(name, data, overwrite=True)
    elif scheme == 'file':
        try:
            mount, rel = local_path(source, mounts)
            session.copy_in(name, os.path.join(mount, rel))
        except (StagingError, OSError) as e:
            logger.warning('%s: %s', what, e)
            raise StagingError(what)
    else:
        logger.warning('%s: unsupported source %s', what, source)
        raise StagingError(what)
    logger.debug('staged in %s from %s', name, source)


def deliver_output(transport, session: FileStore, name, destination, subject, mounts,
                   rc_url='', retries=3, backoff=1.0):
    """
    Moves one output to its destination and registers the new replica when the
    destination names a logical file ("?lfn=<name>").
    """
    url, lfn = split_destination(destination)
    scheme = urlsplit(url).scheme
    what = 'stage-out failed: %s' % name
    try:
        data = session.get(name)
    except ServiceError:
        raise StagingError('output missing: %s' % name)

    if scheme == SE_SCHEME:
        with_retries(lambda: put_file(transport, url, data, subject, overwrite=True),
                     retries, backoff, what)
    elif scheme == 'file':
        try:
            mount, rel = local_path(url, mounts)
            FileStore(mount).copy_in(rel, session.resolve(name))
        except (StagingError, OSError, ServiceError) as e:
            logger.warning('%s: %s', what, e)
            raise StagingError(what)
    else:
        logger.warning('%s: unsupported destination %s', what, url)
        raise StagingError(what)

    if lfn:
        if not rc_url:
            raise StagingError('registration failed: %s (no replica catalog)' % name)
        with_retries(lambda: rc_register(transport, rc_url, lfn, url, subject),
                     retries, backoff, 'registration failed: %s' % name)
    logger.debug('staged out %s to %s', name, url)


def remove_session(session_dir):
    shutil.rmtree(session_dir, ignore_errors=True)
