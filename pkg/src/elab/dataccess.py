"""XML-over-HTTP data access: wire codec, server dispatcher, client.

Seven operations: GetStatus, Browse, Read, Write, Subscribe,
SubscriptionPolledRefresh, SubscriptionCancel. Requests and responses are
flat XML documents (no envelope); the full vocabulary with normative
examples lives in docs/protocol.md.

The server is total: any byte string in yields a well-formed response out,
a ``<DaFault>`` with one of the codes MALFORMED, UNKNOWN_OP,
UNKNOWN_DEVICE, UNKNOWN_HANDLE when the request cannot be served.
Subscriptions deliver by polled refresh: a refresh returns exactly the
items whose value moved beyond their deadband or whose quality changed
since the previous delivery.
"""

from __future__ import annotations

import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import httpx

from .clock import WallClock
from .device_core import Device, DeviceRegistry, Quality, Scalar, UnknownDevice, UnknownPath
from .learning_design import Access, DataType
from .xmlio import XmlWriter, fmt_bool, fmt_float, parse_bool

DEFAULT_TTL = 60.0

FAULT_MALFORMED = "MALFORMED"
FAULT_UNKNOWN_OP = "UNKNOWN_OP"
FAULT_UNKNOWN_DEVICE = "UNKNOWN_DEVICE"
FAULT_UNKNOWN_HANDLE = "UNKNOWN_HANDLE"


class _Malformed(ValueError):
    """Internal: request cannot be decoded; becomes a MALFORMED fault."""


# ---------------------------------------------------------------------------
# Wire model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WireValue:
    path: str
    data_type: DataType | None
    value: Scalar | None
    quality: Quality
    timestamp: float


@dataclass(frozen=True)
class WireNode:
    path: str
    kind: str  # "folder" | "item"
    data_type: DataType | None = None
    access: Access | None = None
    unit: str = ""
    lo: float | None = None
    hi: float | None = None


@dataclass(frozen=True)
class WireWriteResult:
    path: str
    accepted: bool
    reason: str | None = None


@dataclass(frozen=True)
class WriteSpec:
    path: str
    data_type: DataType
    value: Scalar


@dataclass(frozen=True)
class SubscribeItem:
    path: str
    deadband: float = 0.0


@dataclass(frozen=True)
class GetStatusRequest:
    client_handle: str | None = None


@dataclass(frozen=True)
class BrowseRequest:
    device_id: str
    path: str = ""
    client_handle: str | None = None


@dataclass(frozen=True)
class ReadRequest:
    device_id: str
    paths: tuple[str, ...]
    client_handle: str | None = None


@dataclass(frozen=True)
class WriteRequest:
    device_id: str
    writes: tuple[WriteSpec, ...]
    client_handle: str | None = None


@dataclass(frozen=True)
class SubscribeRequest:
    device_id: str
    items: tuple[SubscribeItem, ...]
    ttl: float = DEFAULT_TTL
    client_handle: str | None = None


@dataclass(frozen=True)
class RefreshRequest:
    handle: str
    client_handle: str | None = None


@dataclass(frozen=True)
class CancelRequest:
    handle: str
    client_handle: str | None = None


DaRequest = (
    GetStatusRequest
    | BrowseRequest
    | ReadRequest
    | WriteRequest
    | SubscribeRequest
    | RefreshRequest
    | CancelRequest
)


@dataclass(frozen=True)
class GetStatusResponse:
    server_state: str
    start_time: float
    device_count: int
    reply_time: float
    client_handle: str | None = None


@dataclass(frozen=True)
class BrowseResponse:
    nodes: tuple[WireNode, ...]
    reply_time: float
    client_handle: str | None = None


@dataclass(frozen=True)
class ReadResponse:
    values: tuple[WireValue, ...]
    reply_time: float
    client_handle: str | None = None


@dataclass(frozen=True)
class WriteResponse:
    results: tuple[WireWriteResult, ...]
    reply_time: float
    client_handle: str | None = None


@dataclass(frozen=True)
class SubscribeResponse:
    handle: str
    values: tuple[WireValue, ...]
    reply_time: float
    client_handle: str | None = None


@dataclass(frozen=True)
class RefreshResponse:
    handle: str
    changed: tuple[WireValue, ...]
    reply_time: float
    client_handle: str | None = None


@dataclass(frozen=True)
class CancelResponse:
    handle: str
    reply_time: float
    client_handle: str | None = None


@dataclass(frozen=True)
class Fault:
    code: str
    message: str
    client_handle: str | None = None


DaResponse = (
    GetStatusResponse
    | BrowseResponse
    | ReadResponse
    | WriteResponse
    | SubscribeResponse
    | RefreshResponse
    | CancelResponse
    | Fault
)

_OP_BY_REQUEST = {
    GetStatusRequest: "GetStatus",
    BrowseRequest: "Browse",
    ReadRequest: "Read",
    WriteRequest: "Write",
    SubscribeRequest: "Subscribe",
    RefreshRequest: "SubscriptionPolledRefresh",
    CancelRequest: "SubscriptionCancel",
}

_OP_BY_RESPONSE = {
    GetStatusResponse: "GetStatus",
    BrowseResponse: "Browse",
    ReadResponse: "Read",
    WriteResponse: "Write",
    SubscribeResponse: "Subscribe",
    RefreshResponse: "SubscriptionPolledRefresh",
    CancelResponse: "SubscriptionCancel",
}


# ---------------------------------------------------------------------------
# Codec
# ---------------------------------------------------------------------------


def _encode_scalar(value: Scalar, data_type: DataType) -> str:
    if data_type == DataType.FLOAT:
        return fmt_float(value)
    if data_type == DataType.BOOL:
        return fmt_bool(value)
    return str(value)


def _decode_scalar(raw: str, data_type: DataType) -> Scalar:
    if data_type == DataType.FLOAT:
        return float(raw)
    if data_type == DataType.INT:
        return int(raw)
    if data_type == DataType.BOOL:
        return parse_bool(raw)
    return raw


def encode_request(req: DaRequest) -> str:
    op = _OP_BY_REQUEST[type(req)]
    w = XmlWriter(declaration=False)
    attrs: dict[str, str | None] = {"op": op, "client-handle": req.client_handle}
    children: list[dict[str, str | None]] = []
    child_tag = "Item"
    if isinstance(req, BrowseRequest):
        attrs.update(device=req.device_id, path=req.path)
    elif isinstance(req, ReadRequest):
        attrs.update(device=req.device_id)
        children = [{"path": p} for p in req.paths]
    elif isinstance(req, WriteRequest):
        attrs.update(device=req.device_id)
        children = [
            {
                "path": s.path,
                "type": s.data_type.value,
                "value": _encode_scalar(s.value, s.data_type),
            }
            for s in req.writes
        ]
    elif isinstance(req, SubscribeRequest):
        attrs.update(device=req.device_id, ttl=fmt_float(req.ttl))
        children = [{"path": s.path, "deadband": fmt_float(s.deadband)} for s in req.items]
    elif isinstance(req, (RefreshRequest, CancelRequest)):
        attrs.update(handle=req.handle)
    if children:
        w.open("DaRequest", **attrs)
        for child in children:
            w.element(child_tag, **child)
        w.close()
    else:
        w.element("DaRequest", **attrs)
    return w.result()


def _req_attr(el: ET.Element, name: str) -> str:
    value = el.get(name)
    if value is None:
        raise _Malformed(f"missing attribute {name!r}")
    return value


def _float_of(raw: str, what: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise _Malformed(f"{what} is not a number: {raw!r}") from None


def decode_request(xml_text: str | bytes) -> DaRequest:
    if isinstance(xml_text, bytes):
        try:
            xml_text = xml_text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise _Malformed(f"body is not UTF-8: {exc}") from exc
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise _Malformed(f"malformed XML: {exc}") from exc
    if root.tag != "DaRequest":
        raise _Malformed(f"root element must be DaRequest, got {root.tag!r}")
    op = _req_attr(root, "op")
    handle = root.get("client-handle")
    items = root.findall("Item")
    if op == "GetStatus":
        return GetStatusRequest(client_handle=handle)
    if op == "Browse":
        return BrowseRequest(
            device_id=_req_attr(root, "device"),
            path=root.get("path", ""),
            client_handle=handle,
        )
    if op == "Read":
        return ReadRequest(
            device_id=_req_attr(root, "device"),
            paths=tuple(_req_attr(i, "path") for i in items),
            client_handle=handle,
        )
    if op == "Write":
        writes = []
        for i in items:
            try:
                data_type = DataType(_req_attr(i, "type"))
            except ValueError:
                raise _Malformed(f"bad write type {i.get('type')!r}") from None
            raw = _req_attr(i, "value")
            try:
                value = _decode_scalar(raw, data_type)
            except ValueError:
                raise _Malformed(f"value {raw!r} does not parse as {data_type.value}") from None
            writes.append(WriteSpec(_req_attr(i, "path"), data_type, value))
        return WriteRequest(
            device_id=_req_attr(root, "device"), writes=tuple(writes), client_handle=handle
        )
    if op == "Subscribe":
        subs = tuple(
            SubscribeItem(
                path=_req_attr(i, "path"),
                deadband=_float_of(i.get("deadband", "0.0"), "deadband"),
            )
            for i in items
        )
        return SubscribeRequest(
            device_id=_req_attr(root, "device"),
            items=subs,
            ttl=_float_of(root.get("ttl", fmt_float(DEFAULT_TTL)), "ttl"),
            client_handle=handle,
        )
    if op == "SubscriptionPolledRefresh":
        return RefreshRequest(handle=_req_attr(root, "handle"), client_handle=handle)
    if op == "SubscriptionCancel":
        return CancelRequest(handle=_req_attr(root, "handle"), client_handle=handle)
    raise _UnknownOp(op)


class _UnknownOp(ValueError):
    def __init__(self, op: str):
        super().__init__(f"unknown operation {op!r}")
        self.op = op


def _wire_value_attrs(v: WireValue) -> dict[str, str | None]:
    return {
        "path": v.path,
        "type": None if v.data_type is None else v.data_type.value,
        "value": None
        if v.value is None or v.data_type is None
        else _encode_scalar(v.value, v.data_type),
        "quality": v.quality.value,
        "timestamp": fmt_float(v.timestamp),
    }


def encode_response(resp: DaResponse) -> str:
    w = XmlWriter(declaration=False)
    if isinstance(resp, Fault):
        w.element(
            "DaFault",
            code=resp.code,
            message=resp.message,
            **{"client-handle": resp.client_handle},
        )
        return w.result()

    op = _OP_BY_RESPONSE[type(resp)]
    attrs: dict[str, str | None] = {
        "op": op,
        "client-handle": resp.client_handle,
        "reply-time": fmt_float(resp.reply_time),
    }
    rows: list[tuple[str, dict[str, str | None]]] = []
    if isinstance(resp, GetStatusResponse):
        attrs.update(
            **{
                "server-state": resp.server_state,
                "start-time": fmt_float(resp.start_time),
                "device-count": str(resp.device_count),
            }
        )
    elif isinstance(resp, BrowseResponse):
        for n in resp.nodes:
            rows.append(
                (
                    "Node",
                    {
                        "path": n.path,
                        "kind": n.kind,
                        "type": None if n.data_type is None else n.data_type.value,
                        "access": None if n.access is None else n.access.value,
                        "unit": n.unit or None,
                        "lo": None if n.lo is None else fmt_float(n.lo),
                        "hi": None if n.hi is None else fmt_float(n.hi),
                    },
                )
            )
    elif isinstance(resp, ReadResponse):
        rows = [("Item", _wire_value_attrs(v)) for v in resp.values]
    elif isinstance(resp, WriteResponse):
        rows = [
            (
                "Result",
                {"path": r.path, "accepted": fmt_bool(r.accepted), "reason": r.reason},
            )
            for r in resp.results
        ]
    elif isinstance(resp, SubscribeResponse):
        attrs.update(handle=resp.handle)
        rows = [("Item", _wire_value_attrs(v)) for v in resp.values]
    elif isinstance(resp, RefreshResponse):
        attrs.update(handle=resp.handle)
        rows = [("Item", _wire_value_attrs(v)) for v in resp.changed]
    elif isinstance(resp, CancelResponse):
        attrs.update(handle=resp.handle)
    if rows:
        w.open("DaResponse", **attrs)
        for tag, row in rows:
            w.element(tag, **row)
        w.close()
    else:
        w.element("DaResponse", **attrs)
    return w.result()


def _decode_wire_value(el: ET.Element) -> WireValue:
    raw_type = el.get("type")
    data_type = None if raw_type is None else DataType(raw_type)
    raw_value = el.get("value")
    value = None
    if raw_value is not None and data_type is not None:
        value = _decode_scalar(raw_value, data_type)
    return WireValue(
        path=_req_attr(el, "path"),
        data_type=data_type,
        value=value,
        quality=Quality(_req_attr(el, "quality")),
        timestamp=float(_req_attr(el, "timestamp")),
    )


def decode_response(xml_text: str | bytes) -> DaResponse:
    if isinstance(xml_text, bytes):
        xml_text = xml_text.decode("utf-8")
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise _Malformed(f"malformed XML: {exc}") from exc
    if root.tag == "DaFault":
        return Fault(
            code=_req_attr(root, "code"),
            message=root.get("message", ""),
            client_handle=root.get("client-handle"),
        )
    if root.tag != "DaResponse":
        raise _Malformed(f"unexpected root {root.tag!r}")
    op = _req_attr(root, "op")
    handle = root.get("client-handle")
    reply_time = float(_req_attr(root, "reply-time"))
    if op == "GetStatus":
        return GetStatusResponse(
            server_state=_req_attr(root, "server-state"),
            start_time=float(_req_attr(root, "start-time")),
            device_count=int(_req_attr(root, "device-count")),
            reply_time=reply_time,
            client_handle=handle,
        )
    if op == "Browse":
        nodes = []
        for el in root.findall("Node"):
            raw_type = el.get("type")
            raw_access = el.get("access")
            lo = el.get("lo")
            hi = el.get("hi")
            nodes.append(
                WireNode(
                    path=_req_attr(el, "path"),
                    kind=_req_attr(el, "kind"),
                    data_type=None if raw_type is None else DataType(raw_type),
                    access=None if raw_access is None else Access(raw_access),
                    unit=el.get("unit", ""),
                    lo=None if lo is None else float(lo),
                    hi=None if hi is None else float(hi),
                )
            )
        return BrowseResponse(nodes=tuple(nodes), reply_time=reply_time, client_handle=handle)
    if op == "Read":
        values = tuple(_decode_wire_value(el) for el in root.findall("Item"))
        return ReadResponse(values=values, reply_time=reply_time, client_handle=handle)
    if op == "Write":
        results = tuple(
            WireWriteResult(
                path=_req_attr(el, "path"),
                accepted=parse_bool(_req_attr(el, "accepted")),
                reason=el.get("reason"),
            )
            for el in root.findall("Result")
        )
        return WriteResponse(results=results, reply_time=reply_time, client_handle=handle)
    if op == "Subscribe":
        values = tuple(_decode_wire_value(el) for el in root.findall("Item"))
        return SubscribeResponse(
            handle=_req_attr(root, "handle"),
            values=values,
            reply_time=reply_time,
            client_handle=handle,
        )
    if op == "SubscriptionPolledRefresh":
        changed = tuple(_decode_wire_value(el) for el in root.findall("Item"))
        return RefreshResponse(
            handle=_req_attr(root, "handle"),
            changed=changed,
            reply_time=reply_time,
            client_handle=handle,
        )
    if op == "SubscriptionCancel":
        return CancelResponse(
            handle=_req_attr(root, "handle"), reply_time=reply_time, client_handle=handle
        )
    raise _Malformed(f"unknown response op {op!r}")


# ---------------------------------------------------------------------------
# Server
# ---------------------------------------------------------------------------


@dataclass
class Subscription:
    handle: str
    device_id: str
    items: tuple[SubscribeItem, ...]
    last_sent: dict[str, tuple[Scalar | None, Quality]]
    created_at: float
    last_refresh_at: float
    ttl: float


class DaServer:
    """Dispatches decoded requests against a device registry."""

    def __init__(
        self,
        registry: DeviceRegistry,
        clock: Callable[[], float] | None = None,
        on_write: Callable[[str, list[tuple[str, Scalar]]], None] | None = None,
    ):
        self.registry = registry
        self._clock = clock or WallClock()
        self._lock = threading.RLock()
        self._subs: dict[str, Subscription] = {}
        self._next_handle = 1
        self.start_time = self._clock()
        self.on_write = on_write

    # -- plumbing ------------------------------------------------------------

    def handle_request(self, body: str | bytes) -> str:
        """Total over byte strings: always returns a response document."""
        client_handle = None
        try:
            request = decode_request(body)
            client_handle = request.client_handle
            return encode_response(self.process(request))
        except _Malformed as exc:
            return encode_response(Fault(FAULT_MALFORMED, str(exc), client_handle))
        except _UnknownOp as exc:
            return encode_response(Fault(FAULT_UNKNOWN_OP, str(exc), client_handle))
        except Exception as exc:  # total: never leak a transport-level crash
            return encode_response(Fault(FAULT_MALFORMED, f"unhandled: {exc}", client_handle))

    def process(self, request: DaRequest) -> DaResponse:
        if isinstance(request, GetStatusRequest):
            return self._get_status(request)
        if isinstance(request, BrowseRequest):
            return self._browse(request)
        if isinstance(request, ReadRequest):
            return self._read(request)
        if isinstance(request, WriteRequest):
            return self._write(request)
        if isinstance(request, SubscribeRequest):
            return self._subscribe(request)
        if isinstance(request, RefreshRequest):
            return self._refresh(request)
        if isinstance(request, CancelRequest):
            return self._cancel(request)
        raise _UnknownOp(type(request).__name__)

    def _device(self, device_id: str) -> Device:
        return self.registry.get(device_id)

    def _wire_values(self, device: Device, paths: tuple[str, ...]) -> tuple[WireValue, ...]:
        items = {i.path: i for i in device.descriptor.items}
        out = []
        for iv in device.read(paths):
            item = items.get(iv.path)
            out.append(
                WireValue(
                    path=iv.path,
                    data_type=None if iv.value is None or item is None else item.data_type,
                    value=iv.value,
                    quality=iv.quality,
                    timestamp=iv.timestamp,
                )
            )
        return tuple(out)

    # -- operations ------------------------------------------------------------

    def _get_status(self, req: GetStatusRequest) -> DaResponse:
        return GetStatusResponse(
            server_state="RUNNING",
            start_time=self.start_time,
            device_count=len(self.registry),
            reply_time=self._clock(),
            client_handle=req.client_handle,
        )

    def _browse(self, req: BrowseRequest) -> DaResponse:
        try:
            entries = self._device(req.device_id).browse(req.path)
        except UnknownDevice:
            return Fault(FAULT_UNKNOWN_DEVICE, f"no device {req.device_id!r}", req.client_handle)
        except UnknownPath:
            return Fault(FAULT_MALFORMED, f"no such path {req.path!r}", req.client_handle)
        nodes = []
        for e in entries:
            if e.is_folder:
                nodes.append(WireNode(path=e.path, kind="folder"))
            else:
                lo, hi = (None, None) if e.item.value_range is None else e.item.value_range
                nodes.append(
                    WireNode(
                        path=e.path,
                        kind="item",
                        data_type=e.item.data_type,
                        access=e.item.access,
                        unit=e.item.engineering_unit,
                        lo=lo,
                        hi=hi,
                    )
                )
        return BrowseResponse(
            nodes=tuple(nodes), reply_time=self._clock(), client_handle=req.client_handle
        )

    def _read(self, req: ReadRequest) -> DaResponse:
        try:
            device = self._device(req.device_id)
        except UnknownDevice:
            return Fault(FAULT_UNKNOWN_DEVICE, f"no device {req.device_id!r}", req.client_handle)
        return ReadResponse(
            values=self._wire_values(device, req.paths),
            reply_time=self._clock(),
            client_handle=req.client_handle,
        )

    def _write(self, req: WriteRequest) -> DaResponse:
        try:
            device = self._device(req.device_id)
        except UnknownDevice:
            return Fault(FAULT_UNKNOWN_DEVICE, f"no device {req.device_id!r}", req.client_handle)
        results = device.write([(s.path, s.value) for s in req.writes])
        accepted = [
            (s.path, s.value) for s, r in zip(req.writes, results) if r.accepted
        ]
        if accepted and self.on_write is not None:
            self.on_write(req.device_id, accepted)
        return WriteResponse(
            results=tuple(WireWriteResult(r.path, r.accepted, r.reason) for r in results),
            reply_time=self._clock(),
            client_handle=req.client_handle,
        )

    def _subscribe(self, req: SubscribeRequest) -> DaResponse:
        try:
            device = self._device(req.device_id)
        except UnknownDevice:
            return Fault(FAULT_UNKNOWN_DEVICE, f"no device {req.device_id!r}", req.client_handle)
        if req.ttl <= 0:
            return Fault(FAULT_MALFORMED, f"ttl must be positive, got {req.ttl}", req.client_handle)
        items = {i.path: i for i in device.descriptor.items}
        for sub_item in req.items:
            if sub_item.deadband < 0:
                return Fault(
                    FAULT_MALFORMED,
                    f"negative deadband on {sub_item.path!r}",
                    req.client_handle,
                )
            declared = items.get(sub_item.path)
            if (
                declared is not None
                and declared.data_type in (DataType.BOOL, DataType.STRING)
                and sub_item.deadband > 0
            ):
                return Fault(
                    FAULT_MALFORMED,
                    f"deadband on non-numeric item {sub_item.path!r}",
                    req.client_handle,
                )
        now = self._clock()
        paths = tuple(i.path for i in req.items)
        values = self._wire_values(device, paths)
        with self._lock:
            handle = f"sub-{self._next_handle}"
            self._next_handle += 1
            self._subs[handle] = Subscription(
                handle=handle,
                device_id=req.device_id,
                items=req.items,
                last_sent={v.path: (v.value, v.quality) for v in values},
                created_at=now,
                last_refresh_at=now,
                ttl=req.ttl,
            )
        return SubscribeResponse(
            handle=handle, values=values, reply_time=now, client_handle=req.client_handle
        )

    def _live_subscription(self, handle: str) -> Subscription | None:
        now = self._clock()
        with self._lock:
            sub = self._subs.get(handle)
            if sub is None:
                return None
            if now - sub.last_refresh_at > sub.ttl:
                del self._subs[handle]
                return None
            return sub

    def _refresh(self, req: RefreshRequest) -> DaResponse:
        with self._lock:
            sub = self._live_subscription(req.handle)
            if sub is None:
                return Fault(
                    FAULT_UNKNOWN_HANDLE,
                    f"no live subscription {req.handle!r}",
                    req.client_handle,
                )
            paths = tuple(i.path for i in sub.items)
            try:
                device = self._device(sub.device_id)
                current = self._wire_values(device, paths)
            except UnknownDevice:
                now = self._clock()
                current = tuple(
                    WireValue(path=p, data_type=None, value=None, quality=Quality.BAD, timestamp=now)
                    for p in paths
                )
            deadbands = {i.path: i.deadband for i in sub.items}
            changed = []
            for value in current:
                last_value, last_quality = sub.last_sent.get(value.path, (None, None))
                if value.quality != last_quality:
                    changed.append(value)
                    continue
                if isinstance(value.value, (int, float)) and not isinstance(value.value, bool) \
                        and isinstance(last_value, (int, float)) and not isinstance(last_value, bool):
                    if abs(float(value.value) - float(last_value)) > deadbands.get(value.path, 0.0):
                        changed.append(value)
                elif value.value != last_value:
                    changed.append(value)
            now = self._clock()
            for value in changed:
                sub.last_sent[value.path] = (value.value, value.quality)
            sub.last_refresh_at = now
            return RefreshResponse(
                handle=sub.handle,
                changed=tuple(changed),
                reply_time=now,
                client_handle=req.client_handle,
            )

    def _cancel(self, req: CancelRequest) -> DaResponse:
        with self._lock:
            sub = self._live_subscription(req.handle)
            if sub is None:
                return Fault(
                    FAULT_UNKNOWN_HANDLE,
                    f"no live subscription {req.handle!r}",
                    req.client_handle,
                )
            del self._subs[req.handle]
        return CancelResponse(
            handle=req.handle, reply_time=self._clock(), client_handle=req.client_handle
        )


# ---------------------------------------------------------------------------
# Client
# ---------------------------------------------------------------------------


class TransportError(RuntimeError):
    """The endpoint could not be reached or did not speak HTTP."""


class ProtocolFault(RuntimeError):
    """Server answered with a DaFault."""

    def __init__(self, fault: Fault):
        super().__init__(f"{fault.code}: {fault.message}")
        self.code = fault.code
        self.fault = fault


class DaClient:
    """Posts encoded requests to a data-access endpoint."""

    def __init__(self, endpoint: str, http_client: httpx.Client | None = None):
        self.endpoint = endpoint
        self._http = http_client or httpx.Client(timeout=10.0)

    def call(self, request: DaRequest) -> DaResponse:
        body = encode_request(request)
        try:
            response = self._http.post(
                self.endpoint, content=body, headers={"content-type": "application/xml"}
            )
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        try:
            decoded = decode_response(response.text)
        except (_Malformed, ValueError, KeyError) as exc:
            raise TransportError(f"undecodable response: {exc}") from exc
        if isinstance(decoded, Fault):
            raise ProtocolFault(decoded)
        return decoded

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "DaClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
