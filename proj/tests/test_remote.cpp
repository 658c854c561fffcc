#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ictx/remote.hpp"
#include "stub_server.hpp"

using namespace ictx;
using ictx_test::StubServer;

namespace {

// Softmax of reference logits restricted to the mapped vocabulary ids.
TokenDistribution expected_distribution(const StubServer& server,
                                        const std::vector<int>& server_prefix,
                                        const VocabMap& vocab) {
    const auto logits = server.logits_for(server_prefix);
    TokenDistribution d;
    double mx = -1e300;
    for (int i = 0; i < kVocabSize; ++i) mx = std::max(mx, logits[vocab.server_ids[i]]);
    double z = 0.0;
    for (int i = 0; i < kVocabSize; ++i) {
        d.probs[i] = std::exp(logits[vocab.server_ids[i]] - mx);
        z += d.probs[i];
    }
    for (double& p : d.probs) p /= z;
    return d;
}

}  // namespace

TEST_CASE("three tokens cost three round trips") {
    StubServer server;
    RemoteBackend client(server.url(), VocabMap::identity());
    CacheHandle h = client.fresh();
    for (Token t : {5, 2, 5}) {
        auto [dist, next] = client.next_distribution(h, t);
        CHECK(dist.sum() == Catch::Approx(1.0).margin(1e-12));
        h = next;
    }
    CHECK(client.call_count() == 3);
    CHECK(server.next_requests() == 3);
    // with server-side caching, each request carries exactly one new token
    CHECK(server.tokens_received() == 3);
    const auto expect = expected_distribution(server, {5, 2, 5}, VocabMap::identity());
    auto [dist, h2] = client.next_distribution(client.fork(h), 7);
    (void)dist;
    client.release(h2);
    client.release(h);
}

TEST_CASE("distributions match the reference softmax") {
    StubServer server;
    const VocabMap vocab = VocabMap::identity();
    RemoteBackend client(server.url(), vocab);
    CacheHandle h = client.fresh();
    TokenDistribution got;
    for (Token t : {1, 2, 3}) {
        auto [dist, next] = client.next_distribution(h, t);
        got = dist;
        h = next;
    }
    const TokenDistribution expect = expected_distribution(server, {1, 2, 3}, vocab);
    for (int i = 0; i < kVocabSize; ++i)
        CHECK(got.probs[i] == Catch::Approx(expect.probs[i]).margin(1e-12));
}

TEST_CASE("stateless servers still produce correct distributions") {
    StubServer::Options opt;
    opt.stateless = true;
    StubServer server(opt);
    const VocabMap vocab = VocabMap::identity();
    RemoteBackend client(server.url(), vocab);
    CacheHandle h = client.fresh();
    TokenDistribution got;
    for (Token t : {4, 0, 9}) {
        auto [dist, next] = client.next_distribution(h, t);
        got = dist;
        h = next;
    }
    const TokenDistribution expect = expected_distribution(server, {4, 0, 9}, vocab);
    for (int i = 0; i < kVocabSize; ++i)
        CHECK(got.probs[i] == Catch::Approx(expect.probs[i]).margin(1e-12));
    // full prefixes are resent: 1 + 2 + 3 tokens, and call accounting follows
    CHECK(server.tokens_received() == 6);
    CHECK(client.call_count() == 6);
}

TEST_CASE("forked handles extend independently") {
    StubServer server;
    const VocabMap vocab = VocabMap::identity();
    RemoteBackend client(server.url(), vocab);
    CacheHandle root = client.fresh();
    auto [d0, a] = client.next_distribution(root, 3);
    CacheHandle b = client.fork(a);
    auto [da, a2] = client.next_distribution(a, 1);
    auto [db, b2] = client.next_distribution(b, 8);
    const TokenDistribution ea = expected_distribution(server, {3, 1}, vocab);
    const TokenDistribution eb = expected_distribution(server, {3, 8}, vocab);
    for (int i = 0; i < kVocabSize; ++i) {
        CHECK(da.probs[i] == Catch::Approx(ea.probs[i]).margin(1e-12));
        CHECK(db.probs[i] == Catch::Approx(eb.probs[i]).margin(1e-12));
    }
    CHECK(client.fork_count() == 1);
}

TEST_CASE("vocabulary remapping translates token ids") {
    StubServer::Options opt;
    opt.vocab_size = 32;
    StubServer server(opt);
    nlohmann::json vj;
    for (int d = 0; d < 10; ++d) vj[std::string(1, '0' + d)] = 2 + d;
    vj[","] = 12;
    const VocabMap vocab = VocabMap::from_json(vj);
    RemoteBackend client(server.url(), vocab);
    CacheHandle h = client.fresh();
    auto [dist, h2] = client.next_distribution(h, 5);
    // the server sees id 7 for local digit 5
    const TokenDistribution expect = expected_distribution(server, {7}, vocab);
    for (int i = 0; i < kVocabSize; ++i)
        CHECK(dist.probs[i] == Catch::Approx(expect.probs[i]).margin(1e-12));
}

TEST_CASE("incomplete vocabulary maps are rejected") {
    nlohmann::json vj;
    for (int d = 0; d < 9; ++d) vj[std::string(1, '0' + d)] = d;
    vj[","] = 10;
    CHECK_THROWS_AS(VocabMap::from_json(vj), param_error);
}

TEST_CASE("unknown cache ids surface as protocol errors") {
    StubServer::Options opt;
    opt.always_404 = true;
    StubServer server(opt);
    RemoteBackend client(server.url(), VocabMap::identity());
    CacheHandle h = client.fresh();
    CHECK_THROWS_AS(client.next_distribution(h, 1), protocol_error);
}

TEST_CASE("rejected tokens surface as protocol errors") {
    StubServer::Options opt;
    opt.reject_tokens = true;
    StubServer server(opt);
    RemoteBackend client(server.url(), VocabMap::identity());
    CacheHandle h = client.fresh();
    CHECK_THROWS_AS(client.next_distribution(h, 1), protocol_error);
}

TEST_CASE("busy servers are retried, then given up on") {
    StubServer::Options opt;
    opt.busy_replies = 2;
    StubServer server(opt);
    RemoteBackend client(server.url(), VocabMap::identity(), 3);
    CacheHandle h = client.fresh();
    auto [dist, h2] = client.next_distribution(h, 1);
    CHECK(dist.sum() == Catch::Approx(1.0).margin(1e-12));
    CHECK(server.next_requests() == 3);  // two 503s then success

    StubServer::Options always;
    always.busy_replies = 1 << 20;
    StubServer busy(always);
    RemoteBackend impatient(busy.url(), VocabMap::identity(), 1);
    CacheHandle g = impatient.fresh();
    CHECK_THROWS_AS(impatient.next_distribution(g, 1), transport_error);
}

TEST_CASE("non-finite logits leave no partial state") {
    StubServer::Options opt;
    opt.emit_nan_logits = true;
    StubServer server(opt);
    RemoteBackend client(server.url(), VocabMap::identity());
    CacheHandle h = client.fresh();
    CHECK_THROWS_AS(client.next_distribution(h, 1), protocol_error);
    // the handle was not consumed by the failed call; a healthy retry path
    // would reuse it, so it must still resolve
    CHECK_NOTHROW(client.fork(h));
}

TEST_CASE("unreachable servers raise transport errors") {
    RemoteBackend client("http://127.0.0.1:9", VocabMap::identity(), 0);
    CacheHandle h = client.fresh();
    CHECK_THROWS_AS(client.next_distribution(h, 1), transport_error);
}

TEST_CASE("release deletes the server-side cache") {
    StubServer server;
    RemoteBackend client(server.url(), VocabMap::identity());
    CacheHandle h = client.fresh();
    auto [dist, h2] = client.next_distribution(h, 1);
    CHECK(server.live_caches() >= 1);
    client.release(h2);
    CHECK(server.live_caches() == 0);
}
