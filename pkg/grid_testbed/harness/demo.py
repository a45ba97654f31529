"""
The demonstration testbed: a top GIIS with two country GIISes below it,
three clusters, two storage elements and a replica catalog.
"""
import os

from grid_testbed.cli.fleet_config import load_fleet

FLEET_TEMPLATE = '''\
[fleet]
workdir = state
host = localhost

[giis "nordic"]
port = {base_port_giis}
ttl = {ttl}

[giis "norway"]
port = {base_port_giis_1}
country = NO
ttl = {ttl}
parent_giis = nordic

[giis "sweden"]
port = {base_port_giis_2}
country = SE
ttl = {ttl}
parent_giis = nordic

[rc]
name = rc.nordugrid.org
port = {base_port_rc}
writers = /O=Grid/O=NorduGrid/*
ttl = {ttl}
parent_giis = nordic

[se "se1.uio.no"]
port = {base_port_se}
country = NO
acl = acl.txt
capacity_mb = 64
ttl = {ttl}
parent_giis = norway

[se "se2.lu.se"]
port = {base_port_se_1}
country = SE
acl = acl.txt
capacity_mb = 64
ttl = {ttl}
parent_giis = sweden

[cluster "grid.uio.no"]
port = {base_port_cluster}
country = NO
parent_giis = norway
cpus = 4
queues = short:60:512:100:2, long:3600:2048:1000:2
gridmap = gridmap.txt
runtimeenvironments = OS/LINUX-2.4, APPS/ECHO-1.0
local_se = local/uio
{cluster_options}

[cluster "grid.nbi.dk"]
port = {base_port_cluster_1}
country = NO
parent_giis = norway
cpus = 2
queues = default:600:1024:500:2
gridmap = gridmap.txt
runtimeenvironments = OS/LINUX-2.4
{cluster_options}

[cluster "grid.lu.se"]
port = {base_port_cluster_2}
country = SE
parent_giis = sweden
cpus = 2
queues = batch:1200:256:200:2
gridmap = gridmap-lu.txt
runtimeenvironments = OS/LINUX-2.4, APPS/ECHO-1.0
{cluster_options}
'''

GRIDMAP = '/O=Grid/O=NorduGrid/*\n'
GRIDMAP_LU = '# only Swedish users\n/O=Grid/O=NorduGrid/OU=lu.se/*\n'
ACL = ('/O=Grid/O=NorduGrid/* / read\n'
       '/O=Grid/O=NorduGrid/* /data read,write\n'
       '/O=Grid/O=NorduGrid/CN=host/* / read,write\n')

ECHO_SCRIPT = '#!/bin/sh\necho hello from the grid\necho "$@" > result.txt\n'

ECHO_XRSL = '''\
&(executable="echo.sh")
 (arguments=("demo" "run"))
 (jobname="echo")
 (inputfiles=("echo.sh" ""))
 (stdout="out.txt")
 (outputfiles=("out.txt" "")
              ("result.txt" "ngse://{host}:{se_port}/data/result.txt?lfn=demo/result.txt"))
 (cputime=30)(memory=64)
 (runtimeenvironment="APPS/ECHO-1.0")
'''


def write_demo_fleet(directory, ttl=1, lifetime=3600, upload_timeout=60, retries=3, backoff=1.0,
                     base_port=39000):
    """
    Writes fleet.ini with its gridmap and acl files and the echo job
    (echo.xrsl, echo.sh), returns the fleet.ini path.
    """
    os.makedirs(os.path.join(directory, 'local', 'uio'), exist_ok=True)
    cluster_options = ('lifetime = %d\nupload_timeout = %g\nretries = %d\nbackoff = %g\nttl = %g'
                       % (lifetime, upload_timeout, retries, backoff, ttl))
    text = FLEET_TEMPLATE.format(
        ttl=ttl, cluster_options=cluster_options,
        base_port_cluster=base_port, base_port_cluster_1=base_port + 1,
        base_port_cluster_2=base_port + 2,
        base_port_se=base_port + 100, base_port_se_1=base_port + 101,
        base_port_rc=base_port + 200,
        base_port_giis=base_port + 300, base_port_giis_1=base_port + 301,
        base_port_giis_2=base_port + 302)
    files = {'fleet.ini': text, 'gridmap.txt': GRIDMAP, 'gridmap-lu.txt': GRIDMAP_LU, 'acl.txt': ACL,
             'echo.xrsl': ECHO_XRSL.format(host='localhost', se_port=base_port + 100),
             'echo.sh': ECHO_SCRIPT}
    for name, content in files.items():
        with open(os.path.join(directory, name), 'w', encoding='utf-8') as f:
            f.write(content)
    return os.path.join(directory, 'fleet.ini')


def demo_fleet_config(directory, **kwargs):
    return load_fleet(write_demo_fleet(directory, **kwargs))
