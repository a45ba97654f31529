import logging

import sys

FORMAT = logging.Formatter(
    '[%(asctime)s:%(levelname)s:%(module)s] %(message)s', datefmt='%H:%M:%S')
LEVEL = logging.INFO


def console_handler(level=logging.INFO):
    handler = logging.StreamHandler(sys.stdout)
    handler.setLevel(level)
    handler.setFormatter(FORMAT)
    return handler


def config(level=LEVEL):
    logging.basicConfig(level=level, handlers=[console_handler(level)])


def notification_logger(name, path):
    """
    A logger appending bare message lines to a file, one per record.
    Used in place of e-mail delivery for job state notifications.
    :param name: unique suffix (the cluster name)
    :param path: log file path
    :return: configured logger
    """
    logger = logging.getLogger('grid_testbed.notifications.' + name)
    logger.setLevel(logging.INFO)
    logger.propagate = False
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    handler = logging.FileHandler(path, encoding='utf-8')
    handler.setFormatter(logging.Formatter('%(message)s'))
    logger.addHandler(handler)
    return logger
