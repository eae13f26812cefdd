"""Cryptokey routing: keypairs, the per-gateway routing table mapping peer
public keys to allowed-IP prefixes, authenticated send/receive, and endpoint
roaming.

Send-side, the destination IP picks the peer (longest matching allowed
prefix) and the packet is sealed for that peer's key; receive-side, a packet
is accepted only if it authenticates under a known peer's key AND its inner
source IP resolves back to that same key. The outer source of an
authenticated packet updates the peer's endpoint, so replies follow a
roaming peer.

SECURITY MODEL, READ BEFORE REUSE: sessions are derived from the static-
static X25519 shared secret (HKDF with direction labels) and sealed with
ChaCha20-Poly1305 under a 64-bit send counter. There is no handshake, no
ephemeral rekeying, and therefore NO forward secrecy; the wire format is NOT
WireGuard-compatible. Replay protection is a high-watermark counter, which
rejects out-of-order delivery as replay. Fit for the simulated/loopback
transports in this package, not for hostile networks.
"""

from __future__ import annotations

import base64
import ipaddress
import os
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from slicevpn.errors import SliceVpnError
from slicevpn.transport import Endpoint

WIRE_MAGIC = 0x5747
WIRE_VERSION = 0x01
HEADER = struct.Struct(">HB8s32sQ")  # magic, version, receiver key id, sender public key, counter
HEADER_LEN = HEADER.size  # 51
AEAD_TAG_LEN = 16
INNER_HEADER_LEN = 8  # inner src + dst IPv4
MAX_PLAIN_PAYLOAD = 65_467

_KDF_SALT = b"slicevpn cryptokey v1"
_LABEL_LO_TO_HI = b"init->resp"
_LABEL_HI_TO_LO = b"resp->init"


class CryptokeyError(SliceVpnError):
    """Base for datapath errors."""


class NoPeer(CryptokeyError):
    """No allowed-IPs prefix covers the address."""


class NoEndpoint(CryptokeyError):
    """Peer known but its endpoint was never configured or learned."""


class UnknownPeer(CryptokeyError):
    """Public key is not in the table."""


class AuthFailure(CryptokeyError):
    """AEAD authentication failed (tamper, wrong key, wrong receiver)."""


class ReplayRejected(CryptokeyError):
    """Counter at or below the peer's receive high watermark."""


class SourceAddressViolation(CryptokeyError):
    """Inner source IP does not resolve to the authenticated sender's key."""


class MalformedEnvelope(CryptokeyError):
    """Wire bytes are not a valid envelope."""


# --- keys ---------------------------------------------------------------------


@dataclass(frozen=True)
class KeyPair:
    private: bytes
    public: bytes

    def __repr__(self) -> str:  # never leak the private scalar
        return f"KeyPair(public={self.public_b64})"

    @property
    def public_b64(self) -> str:
        return key_to_base64(self.public)


def generate_keypair(seed: bytes | None = None) -> KeyPair:
    """Create an X25519 keypair; an explicit 32-byte seed is the private scalar
    (clamped by the curve operation), so seeded calls are deterministic."""
    if seed is None:
        seed = os.urandom(32)
    if len(seed) != 32:
        raise CryptokeyError(f"seed must be 32 bytes, got {len(seed)}")
    priv = X25519PrivateKey.from_private_bytes(seed)
    pub = priv.public_key().public_bytes(
        encoding=serialization.Encoding.Raw, format=serialization.PublicFormat.Raw
    )
    return KeyPair(private=seed, public=pub)


def dh(private: bytes, peer_public: bytes) -> bytes:
    """X25519 shared secret."""
    priv = X25519PrivateKey.from_private_bytes(private)
    return priv.exchange(X25519PublicKey.from_public_bytes(peer_public))


def key_to_base64(public: bytes) -> str:
    return base64.b64encode(public).decode("ascii")


def key_from_base64(text: str) -> bytes:
    try:
        raw = base64.b64decode(text, validate=True)
    except Exception as exc:
        raise CryptokeyError(f"not a base64 key: {text!r}") from exc
    if len(raw) != 32:
        raise CryptokeyError(f"key must decode to 32 bytes, got {len(raw)}")
    return raw


def _as_key_bytes(key) -> bytes:
    if isinstance(key, bytes):
        if len(key) != 32:
            raise CryptokeyError(f"key must be 32 bytes, got {len(key)}")
        return key
    if isinstance(key, str):
        return key_from_base64(key)
    raise CryptokeyError(f"not a key: {key!r}")


# --- packets and envelopes ------------------------------------------------------


@dataclass(frozen=True)
class PlainPacket:
    src_ip: str
    dst_ip: str
    payload: bytes

    def __post_init__(self):
        ipaddress.IPv4Address(self.src_ip)
        ipaddress.IPv4Address(self.dst_ip)
        if len(self.payload) > MAX_PLAIN_PAYLOAD:
            raise CryptokeyError(f"payload of {len(self.payload)} bytes exceeds {MAX_PLAIN_PAYLOAD}")

    def pack(self) -> bytes:
        return (ipaddress.IPv4Address(self.src_ip).packed
                + ipaddress.IPv4Address(self.dst_ip).packed
                + self.payload)

    @classmethod
    def unpack(cls, data: bytes) -> "PlainPacket":
        if len(data) < INNER_HEADER_LEN:
            raise MalformedEnvelope("inner packet shorter than its header")
        return cls(
            src_ip=str(ipaddress.IPv4Address(data[:4])),
            dst_ip=str(ipaddress.IPv4Address(data[4:8])),
            payload=data[8:],
        )


@dataclass(frozen=True)
class EncryptedEnvelope:
    receiver_key_id: bytes  # first 8 bytes of receiver public key
    sender_public_key: bytes
    counter: int
    ciphertext: bytes

    def header(self) -> bytes:
        return HEADER.pack(WIRE_MAGIC, WIRE_VERSION, self.receiver_key_id,
                           self.sender_public_key, self.counter)

    def to_bytes(self) -> bytes:
        return self.header() + self.ciphertext

    @classmethod
    def from_bytes(cls, data: bytes) -> "EncryptedEnvelope":
        if len(data) < HEADER_LEN + AEAD_TAG_LEN:
            raise MalformedEnvelope(f"envelope of {len(data)} bytes is too short")
        magic, version, key_id, sender, counter = HEADER.unpack_from(data)
        if magic != WIRE_MAGIC:
            raise MalformedEnvelope(f"bad magic 0x{magic:04x}")
        if version != WIRE_VERSION:
            raise MalformedEnvelope(f"unsupported version {version}")
        return cls(receiver_key_id=key_id, sender_public_key=sender,
                   counter=counter, ciphertext=data[HEADER_LEN:])


# --- allowed-IPs prefix trie ----------------------------------------------------


class _TrieNode:
    __slots__ = ("zero", "one", "owner")

    def __init__(self):
        self.zero: _TrieNode | None = None
        self.one: _TrieNode | None = None
        self.owner: bytes | None = None


class PrefixTrie:
    """Binary trie over IPv4 prefixes; each exact prefix has one owner key."""

    def __init__(self):
        self._root = _TrieNode()

    @staticmethod
    def _bits(value: int, length: int):
        for shift in range(31, 31 - length, -1):
            yield (value >> shift) & 1

    def insert(self, network: ipaddress.IPv4Network, owner: bytes) -> bytes | None:
        """Set the prefix owner; returns the displaced owner, if any."""
        node = self._root
        for bit in self._bits(int(network.network_address), network.prefixlen):
            if bit:
                node.one = node.one or _TrieNode()
                node = node.one
            else:
                node.zero = node.zero or _TrieNode()
                node = node.zero
        previous = node.owner
        node.owner = owner
        return previous if previous != owner else None

    def remove(self, network: ipaddress.IPv4Network):
        node = self._root
        for bit in self._bits(int(network.network_address), network.prefixlen):
            node = node.one if bit else node.zero
            if node is None:
                return
        node.owner = None

    def lookup(self, ip: ipaddress.IPv4Address) -> bytes | None:
        """Owner of the longest prefix containing ip, or None."""
        node = self._root
        best = node.owner
        for bit in self._bits(int(ip), 32):
            node = node.one if bit else node.zero
            if node is None:
                break
            if node.owner is not None:
                best = node.owner
        return best


# --- routing table --------------------------------------------------------------


@dataclass
class PeerEntry:
    public_key: bytes
    allowed_ips: list[ipaddress.IPv4Network]
    endpoint: Endpoint | None = None
    rx_counter_high_watermark: int = 0


def _parse_allowed_ips(allowed_ips) -> list[ipaddress.IPv4Network]:
    networks = []
    for item in allowed_ips:
        if isinstance(item, ipaddress.IPv4Network):
            networks.append(item)
            continue
        try:
            networks.append(ipaddress.IPv4Network(item, strict=True))
        except (ipaddress.AddressValueError, ipaddress.NetmaskValueError, ValueError) as exc:
            raise CryptokeyError(f"invalid allowed-ips prefix {item!r}: {exc}") from exc
    if not networks:
        raise CryptokeyError("allowed_ips must be non-empty")
    return networks


class CryptokeyRoutingTable:
    """One gateway interface's cryptokey state: local keypair, peers, counters."""

    def __init__(self, local_keypair: KeyPair, interface_name: str = "wg0",
                 listen_endpoint: Endpoint | None = None, tunnel_address: str | None = None):
        if tunnel_address is not None:
            try:
                ipaddress.IPv4Address(tunnel_address)
            except (ipaddress.AddressValueError, ValueError) as exc:
                raise CryptokeyError(f"invalid tunnel address {tunnel_address!r}") from exc
        self.interface_name = interface_name
        self.local_keypair = local_keypair
        self.listen_endpoint = listen_endpoint
        self.tunnel_address = tunnel_address
        self.peers: dict[bytes, PeerEntry] = {}
        self.tx_counters: dict[bytes, int] = {}
        self._trie = PrefixTrie()
        self._sessions: dict[bytes, tuple[bytes, bytes]] = {}

    @property
    def public_key(self) -> bytes:
        return self.local_keypair.public

    @property
    def public_key_b64(self) -> str:
        return self.local_keypair.public_b64

    # -- peer management --

    def add_peer(self, public_key, allowed_ips, endpoint: Endpoint | None = None):
        """Add or update a peer. Inserting a prefix another peer already owns
        reassigns it (exact-prefix ownership is unique); updating an existing
        peer unions prefixes and overwrites the endpoint when one is given."""
        key = _as_key_bytes(public_key)
        if key == self.public_key:
            raise CryptokeyError("refusing to peer with our own public key")
        networks = _parse_allowed_ips(allowed_ips)
        entry = self.peers.get(key)
        if entry is None:
            entry = PeerEntry(public_key=key, allowed_ips=[])
            self.peers[key] = entry
        for network in networks:
            displaced = self._trie.insert(network, key)
            if displaced is not None and displaced in self.peers:
                other = self.peers[displaced]
                other.allowed_ips = [n for n in other.allowed_ips if n != network]
            if network not in entry.allowed_ips:
                entry.allowed_ips.append(network)
        if endpoint is not None:
            entry.endpoint = endpoint

    def del_peer(self, public_key):
        key = _as_key_bytes(public_key)
        entry = self.peers.pop(key, None)
        if entry is None:
            raise UnknownPeer(f"no peer {key_to_base64(key)}")
        for network in entry.allowed_ips:
            self._trie.remove(network)
        # tx_counters intentionally survive deletion: session keys are static
        # per key pair, so restarting the counter after a re-add would reuse
        # AEAD nonces under the same key
        self._sessions.pop(key, None)

    def lookup_by_ip(self, ip) -> bytes:
        """Public key owning the longest allowed prefix containing ip."""
        try:
            address = ipaddress.IPv4Address(ip)
        except (ipaddress.AddressValueError, ValueError) as exc:
            raise CryptokeyError(f"not an IPv4 address: {ip!r}") from exc
        owner = self._trie.lookup(address)
        if owner is None:
            raise NoPeer(f"no allowed-ips prefix covers {address}")
        return owner

    def endpoint_of(self, public_key) -> Endpoint | None:
        key = _as_key_bytes(public_key)
        entry = self.peers.get(key)
        if entry is None:
            raise UnknownPeer(f"no peer {key_to_base64(key)}")
        return entry.endpoint

    # -- datapath --

    def _session_keys(self, peer_key: bytes) -> tuple[bytes, bytes]:
        """(send_key, recv_key) for this peer, derived once per static pair."""
        cached = self._sessions.get(peer_key)
        if cached is not None:
            return cached
        shared = dh(self.local_keypair.private, peer_key)
        lo, hi = sorted((self.public_key, peer_key))
        pair = lo + hi

        def derive(label: bytes) -> bytes:
            return HKDF(algorithm=hashes.SHA256(), length=32, salt=_KDF_SALT,
                        info=label + pair).derive(shared)

        key_lo_to_hi = derive(_LABEL_LO_TO_HI)
        key_hi_to_lo = derive(_LABEL_HI_TO_LO)
        if self.public_key == lo:
            keys = (key_lo_to_hi, key_hi_to_lo)
        else:
            keys = (key_hi_to_lo, key_lo_to_hi)
        self._sessions[peer_key] = keys
        return keys

    @staticmethod
    def _nonce(counter: int) -> bytes:
        return b"\x00\x00\x00\x00" + counter.to_bytes(8, "big")

    def send(self, packet: PlainPacket) -> tuple[EncryptedEnvelope, Endpoint]:
        """Seal a packet for the peer owning its destination and return the
        envelope plus the peer's current endpoint.

        The caller is responsible for sourcing the packet from this
        interface's tunnel address or a locally owned prefix; the receiving
        side enforces the cryptokey source check.
        """
        peer_key = self.lookup_by_ip(packet.dst_ip)
        entry = self.peers[peer_key]
        if entry.endpoint is None:
            raise NoEndpoint(f"peer {key_to_base64(peer_key)} has no known endpoint")
        counter = self.tx_counters.get(peer_key, 0) + 1
        self.tx_counters[peer_key] = counter
        send_key, _ = self._session_keys(peer_key)
        aad = HEADER.pack(WIRE_MAGIC, WIRE_VERSION, peer_key[:8], self.public_key, counter)
        ciphertext = ChaCha20Poly1305(send_key).encrypt(self._nonce(counter), packet.pack(), aad)
        envelope = EncryptedEnvelope(
            receiver_key_id=peer_key[:8],
            sender_public_key=self.public_key,
            counter=counter,
            ciphertext=ciphertext,
        )
        return envelope, entry.endpoint

    def receive(self, envelope: EncryptedEnvelope, outer_src: Endpoint) -> PlainPacket:
        """Authenticate and open an envelope.

        Acceptance requires, in order: a known sender key, passing AEAD
        authentication, a counter above the peer's high watermark, and an
        inner source IP whose longest-prefix owner is the sender. Only then
        is the watermark advanced and the peer's endpoint updated to
        outer_src (roaming); rejected traffic never mutates the table.
        """
        sender = envelope.sender_public_key
        entry = self.peers.get(sender)
        if entry is None:
            raise UnknownPeer(f"no peer {key_to_base64(sender)}")
        if envelope.receiver_key_id != self.public_key[:8]:
            raise AuthFailure("envelope is not addressed to this interface")
        _, recv_key = self._session_keys(sender)
        try:
            plaintext = ChaCha20Poly1305(recv_key).decrypt(
                self._nonce(envelope.counter), envelope.ciphertext, envelope.header())
        except InvalidTag as exc:
            raise AuthFailure("AEAD authentication failed") from exc
        if envelope.counter <= entry.rx_counter_high_watermark:
            raise ReplayRejected(
                f"counter {envelope.counter} <= watermark {entry.rx_counter_high_watermark}")
        packet = PlainPacket.unpack(plaintext)
        try:
            source_owner = self.lookup_by_ip(packet.src_ip)
        except NoPeer:
            source_owner = None
        if source_owner != sender:
            raise SourceAddressViolation(
                f"inner source {packet.src_ip} does not resolve to the sender's key")
        entry.rx_counter_high_watermark = envelope.counter
        entry.endpoint = outer_src
        return packet
