import json
import stat
from urllib.parse import parse_qs, parse_qsl, urlsplit

import pytest

from blendkit import fixtures
from blendkit.auth import (
    AuthManager,
    Bearer,
    NoAuth,
    QueryToken,
    TokenCache,
    apply_auth,
    oauth2_authorize_url,
    oauth2_exchange_code,
    redact,
    simple_authenticate,
    with_credentials,
)
from blendkit.description import OAuth2Auth, SimpleAuth, load_catalog
from blendkit.errors import AuthRejected, AuthRequired, TokenNotFound
from blendkit.mock import start_mock
from blendkit.request import PreparedRequest
from blendkit.transport import HttpResponse, UrllibTransport

OAUTH = OAuth2Auth(consumer_key="app id", consumer_secret="s3cr&t",
                   request_token_url="https://fb.example/rt",
                   access_token_url="https://fb.example/oauth/access_token",
                   authorize_url="https://fb.example/dialog/oauth")


class RecordingTransport:
    def __init__(self, *responses):
        self.responses = list(responses)
        self.sent: list[PreparedRequest] = []

    def send(self, request):
        self.sent.append(request)
        return self.responses.pop(0)


def _json(status, body):
    return HttpResponse(status, (("Content-Type", "application/json"),), json.dumps(body).encode())


def test_simple_auth_against_mock():
    fixture = {"routes": [{"path": "/auth/token", "params": {"api_key": "k 1"},
                           "responses": [{"body": {"access_token": "T1"}}]}]}
    with start_mock(fixture) as mock:
        spec = SimpleAuth(mock.base_url + "/auth/token", (("api_key", "k 1"),))
        state = simple_authenticate(spec, UrllibTransport(5))
        assert state == QueryToken("access_token", "T1")
        assert mock.log[0].query == (("api_key", "k 1"),)


def test_simple_auth_nested_token_path_and_form_body():
    spec = SimpleAuth("http://h/t", (), token_path="auth.token")
    t = RecordingTransport(_json(200, {"auth": {"token": "abc"}}))
    assert simple_authenticate(spec, t) == QueryToken("token", "abc")
    form = HttpResponse(200, (("Content-Type", "application/x-www-form-urlencoded"),),
                        b"access_token=xyz&expires=5")
    assert simple_authenticate(SimpleAuth("http://h/t"), RecordingTransport(form)).token == "xyz"


def test_simple_auth_failures():
    spec = SimpleAuth("http://h/t")
    with pytest.raises(TokenNotFound):
        simple_authenticate(spec, RecordingTransport(_json(200, {})))
    with pytest.raises(TokenNotFound):
        simple_authenticate(spec, RecordingTransport(_json(200, {"access_token": {"x": 1}})))
    with pytest.raises(AuthRejected) as info:
        simple_authenticate(spec, RecordingTransport(_json(403, {"error": "no"})))
    assert info.value.status == 403


def test_simple_auth_calls_before_send_once():
    calls = []
    simple_authenticate(SimpleAuth("http://h/t"), RecordingTransport(_json(200, {"access_token": "a"})),
                        before_send=lambda: calls.append(1))
    assert calls == [1]


def test_authorize_url():
    url = oauth2_authorize_url(OAUTH, "http://localhost/cb?x=1", "st8")
    parts = urlsplit(url)
    assert f"{parts.scheme}://{parts.netloc}{parts.path}" == OAUTH.authorize_url
    q = parse_qs(parts.query)
    assert q == {"response_type": ["code"], "client_id": ["app id"],
                 "redirect_uri": ["http://localhost/cb?x=1"], "state": ["st8"]}
    assert "client_id=app%20id" in parts.query
    assert "s3cr" not in url
    assert parse_qs(urlsplit(oauth2_authorize_url(OAUTH, "r", "")).query,
                    keep_blank_values=True)["state"] == [""]


def test_exchange_code():
    t = RecordingTransport(_json(200, {"access_token": "BEAR", "expires_in": 60}))
    state = oauth2_exchange_code(OAUTH, "c0de", "urn:ietf:wg:oauth:2.0:oob", t, now=1000.0)
    assert state == Bearer("BEAR", 1060.0)
    req = t.sent[0]
    assert req.method == "POST"
    assert req.url == OAUTH.access_token_url
    assert req.header("Content-Type") == "application/x-www-form-urlencoded"
    assert dict(parse_qsl(req.body.decode())) == {
        "grant_type": "authorization_code", "code": "c0de",
        "redirect_uri": "urn:ietf:wg:oauth:2.0:oob", "client_id": "app id",
        "client_secret": "s3cr&t"}
    assert "s3cr" not in req.url


def test_exchange_code_without_expiry_and_rejection():
    t = RecordingTransport(_json(200, {"access_token": "B"}))
    assert oauth2_exchange_code(OAUTH, "c", "r", t).expires_at is None
    with pytest.raises(AuthRejected):
        oauth2_exchange_code(OAUTH, "c", "r", RecordingTransport(_json(400, {})))


def test_apply_auth():
    base = PreparedRequest("GET", "http://h/x?a=1")
    assert apply_auth(base, NoAuth()) == base
    q = apply_auth(base, QueryToken("access_token", "t/1"))
    assert q.url == "http://h/x?a=1&access_token=t%2F1"
    assert apply_auth(q, QueryToken("access_token", "t/1")) == q
    assert apply_auth(PreparedRequest("GET", "http://h/x"), QueryToken("k", "v")).url == "http://h/x?k=v"
    b = apply_auth(apply_auth(base, Bearer("old")), Bearer("new"))
    assert [h for h in b.headers if h[0] == "Authorization"] == [("Authorization", "Bearer new")]


def test_reprs_hide_tokens():
    assert "sekrit" not in repr(QueryToken("k", "sekrit"))
    assert "sekrit" not in repr(Bearer("sekrit"))
    assert "sekrit" not in repr(OAuth2Auth("k", "sekrit", "https://a/b", "https://a/c", "https://a/d"))


def test_redact_encoded_form():
    assert redact("url?t=a%2Fb and a/b", ["a/b"]) == "url?t=*** and ***"


def test_with_credentials():
    filled = with_credentials(OAUTH, {"consumer_key": "K2", "consumer_secret": "S2"})
    assert (filled.consumer_key, filled.consumer_secret) == ("K2", "S2")
    simple = SimpleAuth("http://h/t", (("api_key", "a"), ("v", "1")))
    merged = with_credentials(simple, {"url_parameters": {"api_key": "b"}})
    assert merged.url_parameters == (("api_key", "b"), ("v", "1"))
    assert with_credentials(None, {"x": 1}) is None


def test_token_cache_round_trip_and_permissions(tmp_path):
    cache = TokenCache(tmp_path / "sub" / "credentials.json")
    cache.put("a", QueryToken("access_token", "t"))
    cache.put("b", Bearer("u", 5.0))
    assert stat.S_IMODE(cache.path.stat().st_mode) == 0o600
    again = TokenCache(cache.path)
    assert again.get("a") == QueryToken("access_token", "t")
    assert again.get("b") == Bearer("u", 5.0)
    again.delete("a")
    assert again.get("a") is None
    assert list(tmp_path.joinpath("sub").iterdir()) == [cache.path]


def test_token_cache_ignores_garbage(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{oops")
    assert TokenCache(path).get("a") is None


def test_manager_authenticates_once_and_caches(tmp_path):
    catalog = load_catalog(fixtures.config_dir())
    server = catalog.get("twitter-generic")
    t = RecordingTransport(_json(200, {"access_token": "tok"}))
    mgr = AuthManager(t, TokenCache(tmp_path / "c.json"))
    assert mgr.state_for(server) == QueryToken("access_token", "tok")
    assert mgr.state_for(server) == QueryToken("access_token", "tok")
    assert len(t.sent) == 1
    fresh = AuthManager(RecordingTransport(), TokenCache(tmp_path / "c.json"))
    assert fresh.state_for(server).token == "tok"
    fresh.invalidate(server.name)
    assert TokenCache(tmp_path / "c.json").get(server.name) is None


def test_manager_oauth2_requires_cached_token(tmp_path):
    server = load_catalog(fixtures.config_dir()).get("facebook-like")
    mgr = AuthManager(RecordingTransport(), TokenCache(tmp_path / "c.json"), wall=lambda: 100.0)
    with pytest.raises(AuthRequired):
        mgr.state_for(server)
    mgr.store(server.name, Bearer("b", expires_at=50.0))
    with pytest.raises(AuthRequired):
        mgr.state_for(server)
    mgr.store(server.name, Bearer("b", expires_at=500.0))
    assert mgr.state_for(server) == Bearer("b", 500.0)


def test_manager_without_authentication():
    server = load_catalog(fixtures.config_dir()).get("twitter-search")
    assert AuthManager(RecordingTransport()).state_for(server) == NoAuth()


def test_manager_token_param_override():
    server = load_catalog(fixtures.config_dir()).get("twitter-generic")
    mgr = AuthManager(RecordingTransport(_json(200, {"access_token": "x"})),
                      server_overrides={"twitter-generic": {"token_param": "oauth_token"}})
    assert mgr.state_for(server) == QueryToken("oauth_token", "x")
