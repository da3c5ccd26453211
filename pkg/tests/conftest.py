from __future__ import annotations

import pytest

from unispace.client import ProtocolClient
from unispace.domain import DomainConfig
from unispace.server import DomainServer


@pytest.fixture
def server():
    srv = DomainServer(DomainConfig(root=None, seed=42))
    yield srv
    srv.stop()


@pytest.fixture
def owner(server):
    client = ProtocolClient(server)
    client.hello({"principal": "owner", "secret": server.domain.owner_secret})
    yield client
    client.close()


def make_server(root=None, seed=42, **kwargs) -> DomainServer:
    return DomainServer(DomainConfig(root=root, seed=seed, **kwargs))


def owner_client(srv: DomainServer, record: bool = False,
                 over_tcp: str | None = None) -> ProtocolClient:
    client = ProtocolClient(over_tcp if over_tcp else srv, record=record)
    client.hello({"principal": "owner", "secret": srv.domain.owner_secret})
    return client
