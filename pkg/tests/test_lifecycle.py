import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import (
    EAST_PEER_PARAMS,
    WEST_PEER_PARAMS,
    WEST_SEED,
    create_vpn_instance,
    make_orchestrator,
    peer_gateways,
    sample_text,
)
from slicevpn.cryptokey import EncryptedEnvelope, PlainPacket, UnknownPeer, AuthFailure, generate_keypair
from slicevpn.descriptors import parse_descriptor, parse_vnfd
from slicevpn.errors import AuthorizationError
from slicevpn.lifecycle import ADMIN, Actor, LifecycleError, Orchestrator, export_event_log
from slicevpn.transport import Endpoint

TENANT = Actor("tenant1", "tenant")


class TestOnboarding:
    def test_out_of_order_onboard_warns_then_ns_create_fails(self):
        orch = Orchestrator()
        nsd = parse_descriptor(sample_text("nsd-wireguard-vpn.yaml"))
        orch.onboard_package(nsd)
        warnings = orch.onboard_warnings(nsd)
        assert any("unresolved vnfd ref" in w for w in warnings)
        with pytest.raises(LifecycleError, match="unresolved vnfd refs"):
            orch.ns_create(ADMIN, "wg-vpn")

    def test_resolved_catalog_has_no_warnings(self, orch):
        nsd = orch.catalog.nsd("wg-vpn")
        assert orch.onboard_warnings(nsd) == []
        assert orch.catalog.validate().ok

    def test_changed_content_rejected(self, orch):
        changed = parse_vnfd(sample_text("vnfd-wireguard-gateway.yaml")
                             .replace("name: wireguard-gateway", "name: other"))
        with pytest.raises(Exception, match="duplicate id"):
            orch.onboard_package(changed)

    def test_tenant_cannot_onboard(self, orch):
        with pytest.raises(AuthorizationError):
            orch.onboard_package(parse_vnfd(sample_text("vnfd-test-host.yaml")), TENANT)


class TestNsCreate:
    def test_reaches_running_with_expected_event_flow(self, orch):
        instance_id = create_vpn_instance(orch)
        instance = orch.instances[instance_id]
        assert instance.state == "Running"
        messages = [(e.source, e.message) for e in instance.events]
        assert messages[0][0] == "NBI" and "ns-create nsd=wg-vpn" in messages[0][1]
        deploy_complete = next(i for i, (s, m) in enumerate(messages) if m == "deploy-complete")
        first_vca = next(i for i, (s, m) in enumerate(messages) if s == "VCA")
        assert deploy_complete < first_vca  # RO finishes before configuration starts
        timestamps = [e.ts for e in instance.events]
        assert timestamps == sorted(timestamps)

    def test_instantiation_params_logged(self, orch):
        instance_id = create_vpn_instance(orch)
        instance = orch.instances[instance_id]
        assert instance.params["member.1.key-seed"] == WEST_SEED.hex()
        assert "key-seed" in instance.events[0].message

    def test_param_overrides_tunnel_address(self, orch):
        instance_id = create_vpn_instance(orch, {"member.1.tunnel-address": "10.77.0.9"})
        record = orch.instances[instance_id].record(1)
        assert record.table.tunnel_address == "10.77.0.9"

    def test_default_tunnel_addresses_follow_member_index(self, orch):
        instance_id = create_vpn_instance(orch)
        instance = orch.instances[instance_id]
        assert instance.record(1).table.tunnel_address == "10.100.0.1"
        assert instance.record(2).table.tunnel_address == "10.100.0.2"

    def test_unknown_param_rejected(self, orch):
        with pytest.raises(LifecycleError, match="unknown instantiation param"):
            orch.ns_create(ADMIN, "wg-vpn", {"bogus": "1"})

    @pytest.mark.parametrize("key,value", [
        ("member.1.listen-port", "abc"),
        ("member.1.listen-port", "70000"),
        ("member.1.tunnel-address", "999.1.1.1"),
        ("member.1.key-seed", "zz"),
        ("member.1.key-seed", "0a"),  # too short
    ])
    def test_malformed_param_values_rejected_before_deploy(self, orch, key, value):
        with pytest.raises(LifecycleError, match="bad value"):
            orch.ns_create(ADMIN, "wg-vpn", {key: value})
        assert orch.instances == {}  # rejected before anything was created
        assert orch.vim.topology().networks == ()

    def test_tenant_denied(self, orch):
        with pytest.raises(AuthorizationError, match="authorization denied"):
            orch.ns_create(TENANT, "wg-vpn")

    def test_unknown_nsd(self, orch):
        with pytest.raises(LifecycleError, match="no nsd"):
            orch.ns_create(ADMIN, "nope")

    def test_listen_endpoint_uses_tunnel_interface_ip(self, orch):
        instance_id = create_vpn_instance(orch)
        instance = orch.instances[instance_id]
        assert instance.record(1).table.listen_endpoint == Endpoint("192.168.100.1", 51820)
        assert instance.record(2).table.listen_endpoint == Endpoint("192.168.100.2", 51820)

    def test_failure_in_second_member_keeps_event_order(self, orch):
        # member 1's full chain outlives member 2's early failure; timestamps
        # must still come out non-decreasing
        orch.onboard_package(parse_vnfd(
            "kind: vnfd\nschema-version: 1\nid: broken-gw\nname: b\n"
            "mgmt-interface: tunnel\n"
            "vdus:\n  - name: gw\n    image: ubuntu\n    interfaces:\n"
            "      - name: tunnel\n        network: tunnel\n"
            "initial-config-primitives:\n  - name: start-wg\n"))
        orch.onboard_package(parse_descriptor(
            "kind: nsd\nschema-version: 1\nid: mixed-ns\nname: m\n"
            "vnf-members:\n"
            "  - member-index: 1\n    vnfd-id: wg-gw\n"
            "  - member-index: 2\n    vnfd-id: broken-gw\n"
            "virtual-links:\n"
            "  - name: tunnel\n    cidr: 10.8.0.0/24\n    attachments:\n"
            "      - member-index: 1\n        interface: tunnel\n"
            "      - member-index: 2\n        interface: tunnel\n"
            "  - name: data-west\n    cidr: 10.8.1.0/24\n    attachments:\n"
            "      - member-index: 1\n        interface: data\n"))
        with pytest.raises(LifecycleError, match="start-wg"):
            orch.ns_create(ADMIN, "mixed-ns")
        events = orch.instances["ns-1"].events
        timestamps = [e.ts for e in events]
        assert timestamps == sorted(timestamps)
        assert any("primitive-failed" in e.message for e in events)

    def test_failed_primitive_marks_instance_failed_with_log_intact(self, orch):
        # start-wg before generate-keys cannot bind a table
        broken = parse_vnfd(
            "kind: vnfd\nschema-version: 1\nid: broken-gw\nname: broken\n"
            "mgmt-interface: tunnel\n"
            "vdus:\n  - name: gw\n    image: ubuntu\n    interfaces:\n"
            "      - name: tunnel\n        network: tunnel\n"
            "initial-config-primitives:\n  - name: start-wg\n  - name: generate-keys\n")
        orch.onboard_package(broken)
        nsd = parse_descriptor(
            "kind: nsd\nschema-version: 1\nid: broken-ns\nname: b\n"
            "vnf-members:\n  - member-index: 1\n    vnfd-id: broken-gw\n"
            "virtual-links:\n  - name: tunnel\n    cidr: 10.8.0.0/24\n"
            "    attachments:\n      - member-index: 1\n        interface: tunnel\n")
        orch.onboard_package(nsd)
        with pytest.raises(LifecycleError, match="start-wg"):
            orch.ns_create(ADMIN, "broken-ns")
        instance = orch.instances["ns-1"]
        assert instance.state == "Failed"
        assert any(e.message == "deploy-complete" for e in instance.events)

    def test_vim_failure_propagates_to_failed_state(self, orch):
        # a /30 tunnel exhausts on the third gateway, mid-deployment
        nsd = parse_descriptor(
            "kind: nsd\nschema-version: 1\nid: cramped-ns\nname: c\n"
            "vnf-members:\n"
            "  - member-index: 1\n    vnfd-id: wg-gw\n"
            "  - member-index: 2\n    vnfd-id: wg-gw\n"
            "  - member-index: 3\n    vnfd-id: wg-gw\n"
            "virtual-links:\n"
            "  - name: tunnel\n    cidr: 10.8.0.0/30\n    attachments:\n"
            "      - member-index: 1\n        interface: tunnel\n"
            "      - member-index: 2\n        interface: tunnel\n"
            "      - member-index: 3\n        interface: tunnel\n"
            "  - name: data\n    cidr: 10.8.1.0/24\n    attachments:\n"
            "      - member-index: 1\n        interface: data\n"
            "      - member-index: 2\n        interface: data\n"
            "      - member-index: 3\n        interface: data\n")
        orch.onboard_package(nsd)
        with pytest.raises(Exception, match="exhausted"):
            orch.ns_create(ADMIN, "cramped-ns")
        instance = orch.instances["ns-1"]
        assert instance.state == "Failed"
        assert any(e.message == "deploy-start" for e in instance.events)
        assert not any(e.message == "deploy-complete" for e in instance.events)


class TestNsAction:
    def test_get_public_key_matches_day1_keypair(self, orch):
        instance_id = create_vpn_instance(orch)
        result = orch.ns_action(ADMIN, instance_id, 1, "get-public-key")
        record = orch.instances[instance_id].record(1)
        assert result.status == "ok"
        assert result.output["public-key"] == record.table.public_key_b64
        assert result.duration == 0

    def test_symmetric_add_peer_establishes_tunnel(self, running_vpn):
        orch, instance_id = running_vpn
        instance = orch.instances[instance_id]
        west, east = instance.record(1), instance.record(2)
        packet = PlainPacket("10.100.0.1", "10.100.0.2", b"ping")
        envelope, destination = west.table.send(packet)
        west.handle.send(destination, envelope.to_bytes())
        datagram = east.handle.recv()
        assert east.table.receive(EncryptedEnvelope.from_bytes(datagram.data), datagram.src) == packet

    def test_add_peer_duration_60(self, orch):
        instance_id = create_vpn_instance(orch)
        first, second = peer_gateways(orch, instance_id)
        assert first.duration == 60 and second.duration == 60

    def test_del_peer_duration_51_and_routing_cleared(self, running_vpn):
        orch, instance_id = running_vpn
        east_key = orch.instances[instance_id].record(2).table.public_key_b64
        result = orch.ns_action(ADMIN, instance_id, 1, "del-peer", {"public-key": east_key})
        assert result.status == "ok" and result.duration == 51
        west = orch.instances[instance_id].record(1)
        with pytest.raises(Exception):
            west.table.send(PlainPacket("10.100.0.1", "10.100.0.2", b"x"))

    def test_undeclared_action(self, running_vpn):
        orch, instance_id = running_vpn
        with pytest.raises(LifecycleError, match="not declared"):
            orch.ns_action(ADMIN, instance_id, 1, "reboot")

    def test_day2_start_wg_undeclared_on_canonical_gateway(self, running_vpn):
        orch, instance_id = running_vpn
        with pytest.raises(LifecycleError, match="not declared"):
            orch.ns_action(ADMIN, instance_id, 1, "start-wg")

    def test_bad_param_type(self, running_vpn):
        orch, instance_id = running_vpn
        with pytest.raises(LifecycleError, match="bad param"):
            orch.ns_action(ADMIN, instance_id, 1, "add-peer",
                           {"public-key": "k", "allowed-ips": "not-a-cidr"})

    def test_unknown_param_name(self, running_vpn):
        orch, instance_id = running_vpn
        with pytest.raises(LifecycleError, match="unknown param"):
            orch.ns_action(ADMIN, instance_id, 1, "get-public-key", {"x": "1"})

    def test_action_on_missing_instance(self, orch):
        with pytest.raises(LifecycleError, match="instance not found"):
            orch.ns_action(ADMIN, "ns-9", 1, "get-public-key")

    def test_action_after_delete_rejected(self, running_vpn):
        orch, instance_id = running_vpn
        orch.ns_delete(ADMIN, instance_id)
        with pytest.raises(LifecycleError, match="not Running"):
            orch.ns_action(ADMIN, instance_id, 1, "get-public-key")

    def test_failing_action_marks_instance_failed(self, running_vpn):
        orch, instance_id = running_vpn
        ghost = generate_keypair(b"\x0e" * 32).public_b64
        result = orch.ns_action(ADMIN, instance_id, 1, "del-peer", {"public-key": ghost})
        assert result.status == "error"
        assert orch.instances[instance_id].state == "Failed"

    def test_stop_and_start_wg_toggle_binding(self, orch):
        # a restartable gateway declares the toggles as Day-2 actions
        toggling = parse_vnfd(
            "kind: vnfd\nschema-version: 1\nid: toggle-gw\nname: t\n"
            "mgmt-interface: tunnel\n"
            "vdus:\n  - name: gw\n    image: ubuntu\n    interfaces:\n"
            "      - name: tunnel\n        network: tunnel\n"
            "initial-config-primitives:\n  - name: generate-keys\n"
            "config-primitives:\n  - name: start-wg\n  - name: stop-wg\n")
        orch.onboard_package(toggling)
        orch.onboard_package(parse_descriptor(
            "kind: nsd\nschema-version: 1\nid: toggle-ns\nname: t\n"
            "vnf-members:\n  - member-index: 1\n    vnfd-id: toggle-gw\n"
            "virtual-links:\n  - name: tunnel\n    cidr: 10.9.0.0/24\n"
            "    attachments:\n      - member-index: 1\n        interface: tunnel\n"))
        instance_id = orch.ns_create(ADMIN, "toggle-ns")
        record = orch.instances[instance_id].record(1)
        assert record.handle is None  # start-wg was not an initial primitive here
        orch.ns_action(ADMIN, instance_id, 1, "start-wg")
        assert record.handle is not None and not record.handle.closed
        orch.ns_action(ADMIN, instance_id, 1, "stop-wg")
        assert record.handle is None


class TestRbac:
    def test_admin_always_allowed(self, orch):
        assert orch.authorize(ADMIN, "ns_create")
        assert orch.authorize(ADMIN, "anything", "ns-1")

    def test_tenant_matrix(self, running_vpn):
        orch, instance_id = running_vpn
        granted = Actor("t", "tenant", frozenset({instance_id}))
        assert orch.authorize(granted, "ns_action", instance_id)
        assert orch.authorize(granted, "ns_show", instance_id)
        assert not orch.authorize(granted, "ns_create")
        assert not orch.authorize(granted, "ns_delete", instance_id)
        assert not orch.authorize(granted, "ns_action", "ns-999")

    def test_tenant_action_on_permitted_instance(self, running_vpn):
        orch, instance_id = running_vpn
        granted = Actor("t", "tenant", frozenset({instance_id}))
        orch.register_actor(granted)
        result = orch.ns_action(granted, instance_id, 1, "get-public-key")
        assert result.status == "ok"

    def test_tenant_on_foreign_instance_denied(self, running_vpn):
        orch, instance_id = running_vpn
        with pytest.raises(AuthorizationError):
            orch.ns_action(TENANT, instance_id, 1, "get-public-key")


class TestInvariants:
    def test_day_ordering_from_executed_primitives(self, running_vpn):
        orch, instance_id = running_vpn
        for record in orch.instances[instance_id].vnf_records:
            initial = record.executed_primitives[:record.initial_count]
            day2 = record.executed_primitives[record.initial_count:]
            if not day2:
                continue
            assert max(p.finished_at for p in initial) <= min(p.started_at for p in day2)

    def test_private_keys_never_leave_the_table(self, running_vpn):
        orch, instance_id = running_vpn
        instance = orch.instances[instance_id]
        secrets = []
        for record in instance.vnf_records:
            if record.table is not None:
                priv = record.table.local_keypair.private
                import base64
                secrets += [priv.hex(), base64.b64encode(priv).decode()]
        exported = export_event_log(instance)
        everything = exported + " ".join(e.message for e in instance.events)
        for record in instance.vnf_records:
            for prim in record.executed_primitives:
                everything += str(prim.params) + prim.result
        for secret in secrets:
            assert secret not in everything

    def test_event_log_export_format(self, running_vpn):
        orch, instance_id = running_vpn
        lines = export_event_log(orch.instances[instance_id]).splitlines()
        assert lines[0].split(" ", 3)[:3] == ["0", "NBI", instance_id]
        for line in lines:
            ts, source, iid, _ = line.split(" ", 3)
            assert source in ("NBI", "RO", "VCA") and iid == instance_id

    def test_forwarding_enabled_by_primitive(self, running_vpn):
        orch, instance_id = running_vpn
        for member in (1, 2):
            for vdu_id in orch.instances[instance_id].record(member).vdu_ids:
                assert orch.vim.vdu(vdu_id).forwarding_enabled

    def test_wall_clock_recorded_but_never_in_events(self, running_vpn):
        orch, instance_id = running_vpn
        instance = orch.instances[instance_id]
        assert 0 < instance.wall_seconds < 5
        assert "wall" not in export_event_log(instance)

    def test_validation_ok_implies_ns_create_has_no_reference_errors(self, orch):
        # soundness: a green catalog report means instantiation cannot trip
        # over unresolved or dangling references
        assert orch.catalog.validate().ok
        instance_id = orch.ns_create(ADMIN, "wg-vpn")
        assert orch.instances[instance_id].state == "Running"


class TestNsDelete:
    def test_infrastructure_fully_released(self, running_vpn):
        orch, instance_id = running_vpn
        orch.ns_delete(ADMIN, instance_id)
        topo = orch.vim.topology()
        assert topo.vdus == () and topo.networks == () and topo.attachments == ()
        assert orch.instances[instance_id].state == "Terminated"

    def test_delete_twice(self, running_vpn):
        orch, instance_id = running_vpn
        orch.ns_delete(ADMIN, instance_id)
        with pytest.raises(LifecycleError, match="already terminated"):
            orch.ns_delete(ADMIN, instance_id)

    def test_tenant_cannot_delete(self, running_vpn):
        orch, instance_id = running_vpn
        with pytest.raises(AuthorizationError):
            orch.ns_delete(TENANT, instance_id)


class TestSlices:
    def test_slice_creates_member_instances_and_shared_network(self, orch):
        slice_id = orch.slice_instantiate(ADMIN, "vpn-slice", {
            "ns.1.member.1.key-seed": "0a" * 32,
            "ns.1.member.2.key-seed": "0b" * 32,
        })
        record = orch.slices[slice_id]
        assert len(record.ns_instance_ids) == 2
        shared = record.networks["join-west"]
        topo = orch.vim.topology()
        assert topo.network(shared) is not None
        joined = {vdu for vdu, net in topo.attachments if net == shared}
        assert len(joined) == 2  # the vpn west gateway and the consumer host

    def test_unresolved_member_nsd(self, orch):
        orch.onboard_package(parse_descriptor(
            "kind: nst\nschema-version: 1\nid: dangling\nname: d\nns-members:\n  - ghost-ns\n"))
        with pytest.raises(LifecycleError, match="unresolved nsd refs"):
            orch.slice_instantiate(ADMIN, "dangling")

    def test_two_slices_have_disjoint_networks_and_keys(self, orch):
        first = orch.slice_instantiate(ADMIN, "vpn-slice")
        second = orch.slice_instantiate(ADMIN, "vpn-slice")
        nets1 = set(orch.slices[first].networks.values())
        nets2 = set(orch.slices[second].networks.values())
        assert nets1.isdisjoint(nets2)
        keys = []
        for slice_id in (first, second):
            for ns_id in orch.slices[slice_id].ns_instance_ids:
                for record in orch.instances[ns_id].vnf_records:
                    if record.table is not None:
                        keys.append(record.table.public_key)
        assert len(keys) == 4 and len(set(keys)) == 4

    def test_cross_slice_envelopes_rejected(self, orch):
        first = orch.slice_instantiate(ADMIN, "vpn-slice")
        second = orch.slice_instantiate(ADMIN, "vpn-slice")

        def vpn_gateways(slice_id):
            vpn_ns = orch.slices[slice_id].ns_instance_ids[0]
            instance = orch.instances[vpn_ns]
            peer_gateways(orch, vpn_ns)
            return instance.record(1).table, instance.record(2).table

        a_west, a_east = vpn_gateways(first)
        b_west, b_east = vpn_gateways(second)
        captured, _ = a_west.send(PlainPacket("10.100.0.1", "10.100.0.2", b"slice-a traffic"))
        for table in (b_west, b_east):
            with pytest.raises((UnknownPeer, AuthFailure)):
                table.receive(captured, Endpoint("203.0.113.5", 5))

    def test_slice_param_routing(self, orch):
        slice_id = orch.slice_instantiate(ADMIN, "vpn-slice", {
            "ns.1.member.1.tunnel-address": "10.66.0.1"})
        vpn_ns = orch.slices[slice_id].ns_instance_ids[0]
        assert orch.instances[vpn_ns].record(1).table.tunnel_address == "10.66.0.1"

    def test_bad_slice_param(self, orch):
        with pytest.raises(LifecycleError, match="unknown slice param"):
            orch.slice_instantiate(ADMIN, "vpn-slice", {"member.1.key-seed": "00" * 32})


# --- property: lifecycle ordering under random schedules -------------------------

_actions = st.lists(
    st.tuples(st.sampled_from(["get-public-key", "add-peer", "del-peer"]),
              st.sampled_from([1, 2])),
    min_size=0, max_size=6)


@settings(max_examples=25, deadline=None)
@given(schedule=_actions, create_first=st.booleans())
def test_day2_requires_running_and_follows_day1(schedule, create_first):
    orch = make_orchestrator()
    instance_id = None
    if create_first:
        instance_id = create_vpn_instance(orch)
        keys = {m: orch.instances[instance_id].record(m).table.public_key_b64 for m in (1, 2)}
    for action, member in schedule:
        if instance_id is None:
            with pytest.raises(LifecycleError, match="instance not found"):
                orch.ns_action(ADMIN, "ns-1", member, action)
            continue
        instance = orch.instances[instance_id]
        if instance.state != "Running":
            with pytest.raises(LifecycleError, match="not Running"):
                orch.ns_action(ADMIN, instance_id, member, action)
            continue
        params = {}
        if action == "add-peer":
            other = 2 if member == 1 else 1
            params = {"public-key": keys[other],
                      **(WEST_PEER_PARAMS if member == 1 else EAST_PEER_PARAMS)}
        elif action == "del-peer":
            other = 2 if member == 1 else 1
            params = {"public-key": keys[other]}
        orch.ns_action(ADMIN, instance_id, member, action, params)  # may mark Failed (del-peer)
    if instance_id is not None:
        for record in orch.instances[instance_id].vnf_records:
            initial = record.executed_primitives[:record.initial_count]
            for day2 in record.executed_primitives[record.initial_count:]:
                assert all(p.finished_at <= day2.started_at for p in initial)
