import pytest

from tilesim import crypto, wire
from tilesim.client import (
    ActivationFailed,
    AuthorizationDenied,
    ClientError,
    ConfirmationRefused,
    EnrollmentFailed,
    MockIdentityVerifier,
    MotionRequired,
    NoTag,
    RegistrationFailed,
)
from tilesim.medium import Position
from tilesim.tag import SONG_CHAR_UUID


def test_register_twice_and_duplicate_email(stack):
    alice = stack.phone("alice")
    assert alice.phone_tile_uuid.startswith(wire.PHONE_PREFIX)
    with pytest.raises(RegistrationFailed):
        alice.register("again@example.com", "pw")
    clone = stack.phone("clone", register=False)
    with pytest.raises(RegistrationFailed):
        clone.register("alice@example.com", "pw")


def test_unregistered_client_cannot_act(stack):
    ghost = stack.phone("ghost", register=False)
    with pytest.raises(ClientError):
        ghost.finder_cycle()


def test_activation_requires_tag_in_range(stack):
    alice = stack.phone("alice")
    far = stack.tag("far", (500, 0))
    with pytest.raises(NoTag):
        alice.activate_tag(far)
    assert not far.activated
    near = stack.owned_tag(alice, "near")
    assert near.activated and near.tile_id in alice.owned_tiles
    # once activated it stops advertising FEEC, so a second activation finds nothing
    with pytest.raises(NoTag):
        stack.phone("bob").activate_tag(near)


def test_activation_fails_for_unknown_vendor(stack):
    alice = stack.phone("alice")
    tag = stack.tag("odd", model="ACME 01.00")
    with pytest.raises(ActivationFailed):
        alice.activate_tag(tag)
    assert not tag.activated


def test_connect_and_ring(stack):
    alice = stack.phone("alice")
    tag = stack.owned_tag(alice, "keys")
    assert alice.ring(tag) == {"characteristic": SONG_CHAR_UUID}
    tag.position = Position(100, 0)
    with pytest.raises(NoTag):
        alice.ring(tag)


def test_finder_skips_own_tags_and_self_identifies(stack):
    alice = stack.phone("alice")
    mine = stack.owned_tag(alice, "mine")
    other_owner = stack.phone("bob", (1000, 0))
    theirs = stack.owned_tag(other_owner, "theirs")
    theirs.position = Position(5, 0)
    body = alice.finder_cycle()
    entries = body.updates[0].tiles
    assert [type(e.data) for e in entries] == [wire.AdvertisedServiceData, wire.ClientData]
    assert entries[0].data.payload_service_data == theirs.advertise().payload
    assert entries[-1].data.tile_uuid == alice.phone_tile_uuid
    assert mine.tile_id not in {e.data.payload_service_data for e in entries[:-1]}


def test_finder_with_nothing_heard_uploads_nothing(stack):
    alice = stack.phone("alice")
    assert alice.finder_cycle() is None
    assert stack.server.reports == []


def test_owner_report_carries_fresh_triplet(stack):
    alice = stack.phone("alice")
    tag = stack.owned_tag(alice, "keys")
    body = alice.report_connected([tag])
    cad = body.updates[0].tiles[0].data
    triplet = crypto.AuthTriplet(cad.rand_a, cad.rand_t, cad.sres_t)
    assert crypto.verify_triplet(stack.server.tags[tag.tile_id].auth_key, triplet, tag.tile_id, "session")


def test_history_returns_finder_sightings_only(stack):
    alice = stack.phone("alice")
    tag = stack.owned_tag(alice, "keys")
    alice.report_connected([tag])
    tag.position = Position(2000, 0)
    finder = stack.phone("finder", (2010, 0))
    stack.world.advance(60)
    finder.finder_cycle()
    (loc,) = alice.query_history(tag.tile_id)
    assert (loc.latitude, loc.longitude) == finder.position.to_latlon()
    with pytest.raises(AuthorizationDenied):
        finder.query_history(tag.tile_id)


def test_sharing_and_revocation_keep_local_key(stack):
    alice, bob = stack.phone("alice"), stack.phone("bob")
    tag = stack.owned_tag(alice, "keys")
    alice.share(tag.tile_id, "bob@example.com")
    bob.sync()
    assert bob.shared_tiles[tag.tile_id].auth_key == alice.owned_tiles[tag.tile_id].auth_key
    alice.revoke_share(tag.tile_id, "bob@example.com")
    bob.sync()
    assert tag.tile_id not in bob.shared_tiles
    assert tag.tile_id in bob.key_cache
    with pytest.raises(AuthorizationDenied):
        bob.query_history(tag.tile_id)


def test_only_owner_can_share_or_transfer(stack):
    alice, bob = stack.phone("alice"), stack.phone("bob")
    tag = stack.owned_tag(alice, "keys")
    with pytest.raises(AuthorizationDenied):
        bob.share(tag.tile_id, "bob@example.com")
    with pytest.raises(AuthorizationDenied):
        bob.transfer(tag.tile_id, "bob@example.com")


def test_transfer_is_picked_up_on_sync(stack):
    alice, bob = stack.phone("alice"), stack.phone("bob")
    tag = stack.owned_tag(alice, "keys")
    alice.transfer(tag.tile_id, "bob@example.com")
    assert tag.tile_id not in alice.owned_tiles
    bob.sync()
    assert tag.tile_id in bob.owned_tiles
    assert bob.ring(tag)["characteristic"] == SONG_CHAR_UUID


def test_rekey_under_fresh_key_toggle(make_stack):
    s = make_stack(seed=4, fresh_key_on_transfer=True)
    alice = s.phone("alice")
    s.phone("bob")
    tag = s.owned_tag(alice, "keys", accept_rekey=True)
    old = alice.owned_tiles[tag.tile_id].auth_key
    alice.share(tag.tile_id, "bob@example.com")
    alice.revoke_share(tag.tile_id, "bob@example.com")
    assert alice.rekey_tag(tag)
    new = alice.owned_tiles[tag.tile_id].auth_key
    assert new != old
    assert tag.advertise().payload == crypto.private_id_at(
        new, tag.tile_id, alice.owned_tiles[tag.tile_id].activation_time, s.world.now
    )


def scan_path():
    # six points 10 m apart, all within range of the origin
    return [Position(-25, 0), Position(25, 0)]


def at_slot_start(world):
    world.advance_to((world.now // crypto.ROTATION_PERIOD_S + 1) * crypto.ROTATION_PERIOD_S)


def test_scan_and_secure_requires_motion(stack):
    alice = stack.phone("alice")
    with pytest.raises(MotionRequired):
        alice.scan_and_secure([Position(0, 0)])
    with pytest.raises(MotionRequired):
        alice.scan_and_secure([Position(0, 0), Position(20, 0)])


def test_scan_and_secure_structure(stack):
    alice = stack.phone("alice")
    own = stack.owned_tag(alice, "wallet")
    bob = stack.phone("bob", (3000, 0))
    stranger = stack.owned_tag(bob, "stray")
    for tag in (own, stranger):
        tag.position = Position(0, 0)
    at_slot_start(stack.world)
    start = stack.world.now
    result = alice.scan_and_secure(scan_path())
    assert stack.world.now - start == 500
    assert len(result.request.scans) == 6 == len(result.recorded)
    assert result.known == ["wallet"]
    assert [c for _, c in result.unknown] == [6]
    for sent, got in zip(result.request.scans, result.response.scans):
        assert set(got) <= set(sent)


def test_anti_theft_hides_tag_from_stock_app_only(stack):
    thief = stack.phone("thief", (5000, 0))
    stolen = stack.owned_tag(thief, "bag")
    thief.enable_anti_theft()
    stolen.position = Position(0, 0)
    stock = stack.phone("victim")
    modified = stack.phone("sleuth", modified_app=True)
    at_slot_start(stack.world)
    assert stock.scan_and_secure(scan_path()).unknown == []
    at_slot_start(stack.world)
    assert [c for _, c in modified.scan_and_secure(scan_path()).unknown] == [6]


def test_anti_theft_enrollment_needs_verification(stack):
    alice = stack.phone("alice", verifier=MockIdentityVerifier(approve=False))
    with pytest.raises(EnrollmentFailed):
        alice.enable_anti_theft()
    assert stack.server.users[alice.user_uuid].anti_theft_identity is None


def test_delete_account_confirmation(stack):
    alice = stack.phone("alice")
    stack.owned_tag(alice, "keys")
    with pytest.raises(ConfirmationRefused):
        alice.delete_account("pw-alice", "delete")
    assert alice.delete_account("pw-alice", "DELETE") == 202
    assert alice.user_uuid is None and alice.owned_tiles == {}


def test_community_stats_counts_self(stack):
    alice = stack.phone("alice")
    tag = stack.owned_tag(alice, "keys")
    alice.report_connected([tag])
    assert alice.community_stats() == 1
    assert alice.community_stats_at(Position(10_000, 0)).tilers_around == 0
