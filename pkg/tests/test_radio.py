import socket

import pytest
from hypothesis import given, strategies as st

from ctaf_goalcast.geometry import (
    DEFAULT_AIRPORT,
    INSUFFICIENT,
    OTHER,
    UNKNOWN,
    Depart,
    EnterLeg,
    Landing,
    LocalPosition,
    Takeoff,
    intent_label_set,
)
from ctaf_goalcast.radio import (
    CONTEXT_PREAMBLE,
    AircraftDirectoryEntry,
    ClientConfig,
    ClientNotConfigured,
    ExternalTimeout,
    HTTPModelClient,
    build_dynamic_context,
    default_static_context,
    extract_intent,
    identify_speaker,
    label_external,
    load_directory,
    normalize_transcript,
    score_labeling,
    transcribe_external,
    word_error_rate,
    write_directory,
)

DIRECTORY = {
    "N17NA": AircraftDirectoryEntry("N17NA", ("P28A", "Piper", "Cherokee", "Archer", "Warrior")),
    "N2423U": AircraftDirectoryEntry("N2423U", ("C172", "Cutlass", "Hawk", "Skyhawk", "Reims")),
    "N121NG": AircraftDirectoryEntry("N121NG", ("DA40", "Diamond Aircraft Ind Inc", "Katana", "Star", "Diamond")),
}
STATES = [("N17NA", LocalPosition(0, 9.26, 0.3)), ("N2423U", LocalPosition(5.556, 0, 0.3)),
          ("N121NG", LocalPosition(0, -7.408, 0.3))]


def ctx():
    return build_dynamic_context(DIRECTORY, STATES)


# -- normalisation


def test_normalize_examples():
    assert normalize_transcript("one three five papa lima").tokens == ("135pl",)
    assert normalize_transcript("runway eight").tokens == ("runway", "8")
    assert normalize_transcript("").tokens == ()
    assert normalize_transcript("Uh, niner tree ZERO oh").tokens == ("9300",)
    assert normalize_transcript("three miles south").tokens == ("3", "miles", "south")


def test_token_spans_point_into_raw():
    ts = normalize_transcript("Cherokee  one three five papa lima")
    for tok, (a, b) in zip(ts.tokens, ts.spans):
        assert ts.raw[a:b].strip()
    assert ts.raw[ts.spans[1][0]:ts.spans[1][1]] == "one three five papa lima"


words = st.sampled_from(["one", "three", "niner", "papa", "lima", "runway", "8", "uh", "Cherokee",
                         "left", "downwind", "N135PL", "miles", "alpha", ",", "."])


@given(st.lists(words, max_size=12))
def test_normalize_idempotent(ws):
    once = normalize_transcript(" ".join(ws))
    assert normalize_transcript(once).tokens == once.tokens
    assert normalize_transcript(once.text).tokens == once.tokens


# -- intent extraction


@pytest.mark.parametrize(
    "text,label",
    [
        ("Butler County traffic Cherokee 135PL three miles south of the field entering left downwind runway 8",
         EnterLeg("08", "downwind")),
        ("", INSUFFICIENT),
        ("Cherokee 135PL taxiing to runway 26", OTHER),
        ("Skyhawk 23U short final runway two six", Landing("26")),
        ("left downwind runway 8 full stop", Landing("08")),
        ("turning base runway 26", EnterLeg("26", "base")),
        ("departing runway 8", Takeoff("08")),
        ("departing the pattern to the north", Depart("N")),
        ("southbound departure", Depart("S")),
        ("departing runway 26 straight out", Depart("W")),
        ("back taxi runway 8", OTHER),
        ("Butler traffic Diamond 121NG", INSUFFICIENT),
        ("left downwind", INSUFFICIENT),  # runway cannot be resolved at a two-ended field
    ],
)
def test_extract_intent_cases(text, label):
    assert extract_intent(text, DEFAULT_AIRPORT) == label


def test_extract_intent_on_one_runway_end_airport():
    from ctaf_goalcast.geometry import AirportConfig, GeoPoint, RunwayEnd

    solo = AirportConfig("solo", GeoPoint(0, 0), (RunwayEnd("08", 80.0, LocalPosition(0, 0)),))
    assert extract_intent("left downwind full stop", solo) == Landing("08")


def test_true_tie_is_insufficient():
    # two equally specific leg phrases naming different legs at the same end position
    assert extract_intent("downwind runway 8 or base runway 26", DEFAULT_AIRPORT) in (
        EnterLeg("26", "base"), INSUFFICIENT)


@given(st.lists(words, max_size=15))
def test_extract_intent_stays_in_label_set(ws):
    label = extract_intent(" ".join(ws), DEFAULT_AIRPORT)
    assert label in intent_label_set(DEFAULT_AIRPORT)
    assert label != UNKNOWN


# -- speaker identification


def test_identify_speaker_examples():
    assert identify_speaker("Butler traffic Skyhawk left downwind runway 8", ctx()) == "N2423U"
    assert identify_speaker("Cherokee 135PL left base", build_dynamic_context(
        {"N135PL": AircraftDirectoryEntry("N135PL", ("Piper", "Cherokee")), "N2423U": DIRECTORY["N2423U"]},
        [("N135PL", LocalPosition(1, 1)), ("N2423U", LocalPosition(2, 2))])) == "N135PL"
    assert identify_speaker("traffic please advise", ctx()) == "Unknown"


def test_identify_speaker_tie_is_unknown():
    d = {"N1AB": AircraftDirectoryEntry("N1AB", ("Cessna",)), "N2CD": AircraftDirectoryEntry("N2CD", ("Cessna",))}
    c = build_dynamic_context(d, [("N1AB", LocalPosition(1, 0)), ("N2CD", LocalPosition(2, 0))])
    assert identify_speaker("Cessna on the downwind", c) == "Unknown"


def test_runway_number_is_not_a_callsign():
    d = {"N908": AircraftDirectoryEntry("N908", ()), "N2CD": AircraftDirectoryEntry("N2CD", ())}
    c = build_dynamic_context(d, [("N908", LocalPosition(1, 0)), ("N2CD", LocalPosition(2, 0))])
    assert identify_speaker("left downwind runway 8", c) == "Unknown"


@given(st.lists(words, max_size=12))
def test_identify_speaker_only_returns_context_tails(ws):
    who = identify_speaker(" ".join(ws), ctx())
    assert who == "Unknown" or who in ctx().tails()


# -- dynamic context


def test_dynamic_context_layout():
    text = ctx().text
    assert text.startswith(CONTEXT_PREAMBLE)
    assert "N121NG\nNames - DA40, Diamond Aircraft Ind Inc, Katana, Star, Diamond\nLocation - 4 miles, South" in text
    assert "N17NA\nNames - P28A, Piper, Cherokee, Archer, Warrior\nLocation - 5 miles, North" in text
    order = [text.index(t + "\n") for t in ("N121NG", "N17NA", "N2423U")]
    assert order == sorted(order)


def test_dynamic_context_edge_cases(caplog):
    assert build_dynamic_context(DIRECTORY, []).text == CONTEXT_PREAMBLE
    c = build_dynamic_context(DIRECTORY, [("N999ZZ", LocalPosition(1, 0))])
    assert c.entries[0].aliases == ()
    assert "N999ZZ" in caplog.text
    at_field = build_dynamic_context(DIRECTORY, [("N17NA", LocalPosition(0, 0, 0.3))])
    assert "Location - 0 miles, Overhead" in at_field.text


def test_directory_roundtrip(tmp_path):
    write_directory(tmp_path / "d.txt", DIRECTORY)
    assert load_directory(tmp_path / "d.txt") == DIRECTORY


def test_directory_rejects_duplicates(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("N1,Piper\nN1,Cessna\n")
    with pytest.raises(ValueError, match="duplicate"):
        load_directory(p)


# -- WER


def test_wer_examples():
    assert word_error_rate("left downwind runway eight", "left downwind runway eight") == 0.0
    assert word_error_rate("left downwind runway eight", "left downwind runway three") == 0.25
    # one deletion plus two substitutions over five reference words
    assert word_error_rate("cherokee left base runway eight", "piper left runway two") == pytest.approx(0.6)
    assert word_error_rate("left base", "left base runway eight full") == 1.5


def test_wer_empty_reference():
    with pytest.raises(ValueError, match="undefined WER"):
        word_error_rate("uh", "anything")


def test_wer_normalisation_invariance():
    assert word_error_rate("Cherokee ONE three five Papa Lima", "cherokee 135PL") == 0.0


# -- scoring


def test_score_labeling():
    t = [("N1", Landing("08")), ("N2", OTHER), ("N3", UNKNOWN), ("N4", Depart("N"))]
    assert score_labeling(t, t) == {"speaker_id_accuracy": 1.0, "intent_label_accuracy": 1.0}
    p = [("N9", Landing("08"))] + t[1:]
    assert score_labeling(p, t)["speaker_id_accuracy"] == 0.75
    allu = [(s, UNKNOWN) for s, _ in t]
    assert score_labeling(allu, t)["intent_label_accuracy"] == 0.25
    with pytest.raises(ValueError):
        score_labeling([], [])


# -- external adapters


class Stub:
    def __init__(self, reply):
        self.reply = reply
        self.prompts = []

    def transcribe(self, audio_ref, prompt):
        return f"fixture text for {audio_ref}"

    def complete(self, prompt):
        self.prompts.append(prompt)
        return self.reply


def test_external_stubs():
    static = default_static_context(DEFAULT_AIRPORT)
    assert transcribe_external("a.wav", static, Stub("")) == "fixture text for a.wav"
    with pytest.raises(ClientNotConfigured, match="client not configured"):
        transcribe_external("a.wav", static, None)
    stub = Stub("N2423U / landing runway 08")
    res = label_external("skyhawk final", static, ctx(), DEFAULT_AIRPORT, stub, call_id="c1")
    assert (res.speaker, res.intent, res.call_id) == ("N2423U", Landing("08"), "c1")
    assert "Radio call: skyhawk final" in stub.prompts[0] and ctx().text in stub.prompts[0]
    prose = label_external("x", static, ctx(), DEFAULT_AIRPORT, Stub("I am not sure what was said."))
    assert prose.intent == INSUFFICIENT and prose.raw_reply == "I am not sure what was said."
    stranger = label_external("x", static, ctx(), DEFAULT_AIRPORT, Stub("N999ZZ / depart:S"))
    assert (stranger.speaker, stranger.intent) == ("Unknown", Depart("S"))


def test_http_client_times_out():
    srv = socket.socket()
    srv.bind(("127.0.0.1", 0))
    srv.listen(1)  # accepts connections but never answers
    try:
        port = srv.getsockname()[1]
        client = HTTPModelClient(ClientConfig(f"http://127.0.0.1:{port}", timeout_s=0.2, max_retries=1, backoff_s=0.01), seed=0)
        with pytest.raises(ExternalTimeout):
            client.complete("hello")
    finally:
        srv.close()
