#include <doctest.h>

#include <lz4.h>

#include <filesystem>
#include <set>
#include <thread>

#include "test_support.hpp"
#include "umap/serialization.hpp"
#include "umap/trace.hpp"

using namespace umap;
using namespace umap::protocol;
using namespace umap::testing;

namespace {

std::string random_payload(Rng& rng, std::size_t n) {
  std::string s(n, '\0');
  const bool compressible = rng.uniform() < 0.5;
  for (auto& c : s) c = static_cast<char>(compressible ? 'a' + rng.below(3) : rng.below(256));
  return s;
}

FrameErrc decode_error(std::span<const std::uint8_t> bytes) {
  try {
    decode_frame(bytes);
  } catch (const FrameError& e) {
    return e.code();
  }
  FAIL("frame decoded without error");
  return FrameErrc::BadMagic;
}

json configure_body(const std::string& task, bool trace_stream = false) {
  return {{"task", task}, {"time", time_config_to_json(coarse())}, {"pacing", false}, {"seed", 5},
          {"trace_stream", trace_stream}};
}

// A served world on an ephemeral port, running on its own thread.
struct LocalServer {
  TcpListener listener{0};
  std::thread thread;
  LocalServer() {
    thread = std::thread([this] {
      ServeOptions opts;
      opts.factory = registry_factory(Registry::builtin());
      serve_world(listener, opts);
    });
  }
  Connection connect() { return Connection(TcpStream::connect("127.0.0.1", listener.port())); }
  void stop() {
    Connection c = connect();
    c.send(MessageKind::Shutdown, "");
    c.receive();
    thread.join();
  }
};

json request(Connection& c, MessageKind kind, const json& body, MessageKind expect) {
  c.send_json(kind, body);
  Frame f = c.receive();
  while (f.kind == MessageKind::TraceChunk) f = c.receive();
  REQUIRE(f.kind == expect);
  return json::parse(f.payload);
}

}  // namespace

TEST_CASE("frame layout") {
  const auto empty = encode_frame(Frame{MessageKind::Hello, 7, ""}, Codec::Raw);
  REQUIRE(empty.size() == 16);
  const std::vector<std::uint8_t> expected{'U', 'M', 'A', 'P', 1, 0, 0, 1, 0, 0, 0, 7, 0, 0, 0, 0};
  CHECK(empty == expected);

  // Hand-built frame: StepRequest, sequence 0x01020304, payload "hi".
  const std::vector<std::uint8_t> bytes{'U', 'M', 'A', 'P', 1, 0, 0, 4, 1, 2, 3, 4, 0, 0, 0, 2, 'h', 'i'};
  CHECK(decode_frame(bytes) == Frame{MessageKind::StepRequest, 0x01020304, "hi"});

  const std::string zeros(4096, '\0');
  const auto packed = encode_frame(Frame{MessageKind::StepResponse, 1, zeros}, Codec::Lz4);
  CHECK(packed[5] == 1);
  CHECK(get_u32(packed.data() + 12) < 4096);
  CHECK(decode_frame(packed).payload == zeros);

  // Small or incompressible payloads stay raw.
  CHECK(encode_frame(Frame{MessageKind::StepResponse, 1, std::string(100, '\0')}, Codec::Lz4)[5] == 0);
  Rng rng(3);
  std::string noise(1000, '\0');
  for (auto& c : noise) c = static_cast<char>(rng.below(256));
  CHECK(encode_frame(Frame{MessageKind::StepResponse, 1, noise}, Codec::Lz4)[5] == 0);

  CHECK(response_kind(MessageKind::Configure) == MessageKind::Hello);
  CHECK(response_kind(MessageKind::StepRequest) == MessageKind::StepResponse);
  CHECK(response_kind(MessageKind::Reset) == MessageKind::StepResponse);
  CHECK(response_kind(MessageKind::Shutdown) == MessageKind::Shutdown);
}

TEST_CASE("lz4 blocks interoperate with the reference format") {
  // Literals only: token 0x50 then five bytes.
  const std::vector<std::uint8_t> literal{0, 0, 0, 5, 0x50, 'h', 'e', 'l', 'l', 'o'};
  CHECK(lz4_unpack(literal) == "hello");
  // "abc" then a 9-byte match at offset 3, then five closing literals.
  const std::vector<std::uint8_t> match{0, 0, 0, 17, 0x35, 'a', 'b', 'c', 3, 0, 0x50, 'X', 'Y', 'Z', 'W', 'V'};
  CHECK(lz4_unpack(match) == "abcabcabcabcXYZWV");

  // Our blocks decode with the library decoder directly.
  const std::string text(2000, 'q');
  const auto packed = lz4_pack(text);
  REQUIRE(get_u32(packed.data()) == 2000);
  std::string out(2000, '\0');
  CHECK(LZ4_decompress_safe(reinterpret_cast<const char*>(packed.data() + 4), out.data(),
                            static_cast<int>(packed.size() - 4), 2000) == 2000);
  CHECK(out == text);
}

TEST_CASE("decode errors are distinct") {
  const auto good = encode_frame(Frame{MessageKind::Reset, 1, "payload"}, Codec::Raw);
  auto bad = good;
  bad[0] = 'X';
  CHECK(decode_error(bad) == FrameErrc::BadMagic);
  bad = good;
  bad[4] = 9;
  CHECK(decode_error(bad) == FrameErrc::UnknownVersion);
  bad = good;
  bad[5] = 7;
  CHECK(decode_error(bad) == FrameErrc::UnknownCodec);
  bad = good;
  bad[7] = 99;
  CHECK(decode_error(bad) == FrameErrc::UnknownMessage);
  CHECK(decode_error(std::span(good).first(10)) == FrameErrc::Truncated);

  // payload_len claims 100, 50 bytes present
  std::vector<std::uint8_t> short_body(good.begin(), good.begin() + 16);
  short_body[12] = 0, short_body[13] = 0, short_body[14] = 0, short_body[15] = 100;
  short_body.resize(16 + 50, 'x');
  CHECK(decode_error(short_body) == FrameErrc::Truncated);

  bad = good;
  bad.push_back('!');
  CHECK(decode_error(bad) == FrameErrc::LengthMismatch);

  bad = good;
  bad[12] = 0x80, bad[13] = 0, bad[14] = 0, bad[15] = 1;
  CHECK(decode_error(bad) == FrameErrc::PayloadTooLarge);

  auto lz = encode_frame(Frame{MessageKind::StepResponse, 1, std::string(4096, 'z')}, Codec::Lz4);
  REQUIRE(lz[5] == 1);
  lz[lz.size() - 3] ^= 0xff;
  lz[20] ^= 0x5a;
  CHECK(decode_error(lz) == FrameErrc::CorruptPayload);
}

TEST_CASE("randomized frames round-trip with both codecs") {
  Rng rng(77);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t n = rng.uniform() < 0.01 ? (std::size_t{1} << 20) : rng.below(3000);
    const Frame f{static_cast<MessageKind>(1 + rng.below(8)), static_cast<std::uint32_t>(rng.next_u64()),
                  random_payload(rng, n)};
    for (Codec c : {Codec::Raw, Codec::Lz4}) REQUIRE(decode_frame(encode_frame(f, c)) == f);
  }
}

TEST_CASE("serve_world happy path, freeze and errors") {
  LocalServer server;
  {
    Connection c = server.connect();
    const json hello = request(c, MessageKind::Hello, json::object(), MessageKind::Hello);
    CHECK(hello.at("configured") == false);
    const json cfg = request(c, MessageKind::Configure, configure_body("metal_clash_5lc_5mc"), MessageKind::Hello);
    CHECK(cfg.at("frames_per_decision") == 15);
    CHECK(cfg.at("teams") == json{"red", "blue"});
    json snap = request(c, MessageKind::Reset, {{"seed", 3}}, MessageKind::StepResponse);
    CHECK(snap.at("state").at("agents").size() == 20);
    WorldState w = snap.at("state").get<WorldState>();
    for (int s = 1; s <= 3; ++s) {
      json body = actions_body(uniform_actions(w, metal_clash::kMoveEast));
      snap = request(c, MessageKind::StepRequest, body, MessageKind::StepResponse);
      CHECK(snap.at("done") == false);
      CHECK(snap.at("episode_step") == s);
      w = snap.at("state").get<WorldState>();
      // Frozen between steps.
      const auto frame = snap.at("frame_index").get<std::int64_t>();
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
      CHECK(request(c, MessageKind::Hello, json::object(), MessageKind::Hello).at("frame_index") == frame);
    }
    CHECK(c.last_sent() == c.last_received());

    // Missing action: ErrorReport, then the server hangs up.
    JointAction partial = uniform_actions(w, 0);
    partial.erase(partial.begin());
    const json err = request(c, MessageKind::StepRequest, actions_body(partial), MessageKind::ErrorReport);
    CHECK(err.at("code") == "ActionError");
    CHECK_THROWS_AS(c.receive(), TransportError);
  }
  {
    Connection c = server.connect();
    const json err = request(c, MessageKind::StepRequest, actions_body({}), MessageKind::ErrorReport);
    CHECK(err.at("code") == "NotConfigured");
  }
  {
    Connection c = server.connect();
    request(c, MessageKind::Configure, configure_body("metal_clash_5lc_5mc"), MessageKind::Hello);
    const json err = request(c, MessageKind::StepRequest, actions_body({}), MessageKind::ErrorReport);
    CHECK(err.at("code") == "NotReset");
  }
  {
    Connection c = server.connect();
    const json err = request(c, MessageKind::Configure, {{"task", "nope"}}, MessageKind::ErrorReport);
    CHECK(err.at("code") == "BadRequest");
  }
  {
    // A replayed sequence number is a protocol violation.
    Connection c = server.connect();
    c.send_frame(Frame{MessageKind::Hello, 5, "{}"});
    c.receive();
    c.send_frame(Frame{MessageKind::Hello, 5, "{}"});
    const Frame f = c.receive();
    CHECK(f.kind == MessageKind::ErrorReport);
    CHECK(json::parse(f.payload).at("code") == "OutOfSequence");
  }
  server.stop();
}

TEST_CASE("two servers answer identical sessions byte for byte") {
  auto session = [](LocalServer& server) {
    Connection c = server.connect();
    std::vector<std::string> payloads;
    c.send_json(MessageKind::Configure, configure_body("flag_capture_1script"));
    c.receive();
    c.send_json(MessageKind::Reset, {{"seed", 8}});
    Frame f = c.receive();
    payloads.push_back(f.payload);
    Rng rng(8);
    for (int s = 0; s < 5; ++s) {
      const WorldState w = json::parse(f.payload).at("state").get<WorldState>();
      JointAction a;
      for (const auto& ag : w.agents) a[ag.agent_id] = static_cast<std::int32_t>(rng.below(8));
      c.send_json(MessageKind::StepRequest, actions_body(a));
      f = c.receive();
      payloads.push_back(f.payload);
    }
    return payloads;
  };
  LocalServer a, b;
  CHECK(session(a) == session(b));
  a.stop();
  b.stop();
}

TEST_CASE("trace streaming reproduces the episode") {
  LocalServer server;
  Connection c = server.connect();
  c.send_json(MessageKind::Configure, configure_body("monster_crisis_duo", true));
  c.receive();
  std::vector<std::uint8_t> trace_bytes;
  auto pump = [&](MessageKind kind, const json& body) {
    c.send_json(kind, body);
    while (true) {
      Frame f = c.receive();
      if (f.kind == MessageKind::TraceChunk) {
        trace_bytes.insert(trace_bytes.end(), f.payload.begin(), f.payload.end());
        continue;
      }
      return json::parse(f.payload);
    }
  };
  json snap = pump(MessageKind::Reset, {{"seed", 21}});
  Rng rng(21);
  while (!snap.at("done").get<bool>()) {
    const WorldState w = snap.at("state").get<WorldState>();
    JointAction a;
    for (const auto& ag : w.agents)
      if (ag.alive) a[ag.agent_id] = static_cast<std::int32_t>(rng.below(7));
    snap = pump(MessageKind::StepRequest, actions_body(a));
  }
  c.close();
  server.stop();

  const Trace trace = decode_trace(trace_bytes);
  CHECK(trace.header.task == "monster_crisis_duo");
  CHECK(trace.header.seed == 21);
  CHECK(trace.header.layout_version == kFeatureLayoutVersion);
  REQUIRE(trace.end.has_value());
  CHECK(trace.end->steps == trace.steps.size());
  CHECK(digest_hex(trace.end->digest) == snap.at("digest"));
  const ReplayResult r = replay(Registry::builtin(), trace);
  CHECK(r.matches);
  CHECK(r.steps == trace.steps.size());
}

TEST_CASE("trace files encode, decode and detect divergence") {
  Simulation sim(Registry::builtin(), "metal_clash_5lc_5mc", coarse(8.0));
  sim.set_pacing(false);
  sim.reset(4);
  Trace t = record_header(sim);
  const auto path = std::filesystem::temp_directory_path() / "umap_test_trace.umtr";
  {
    TraceWriter writer(path, t.header, t.reset_digest);
    Rng rng(4);
    for (std::uint32_t s = 1; s <= 10; ++s) {
      const JointAction a = random_actions(sim, rng);
      sim.step(a);
      const TraceStep step{s, a, sim.digest()};
      writer.step(step);
      t.steps.push_back(step);
    }
    t.end = TraceEnd{10, sim.digest(), sim.state().winner};
    writer.end(*t.end);
  }
  const Trace back = read_trace(path);
  CHECK(back == t);
  CHECK(back.header.dilation == 8.0);
  CHECK(replay(Registry::builtin(), back).matches);

  Trace tampered = back;
  auto& act = tampered.steps[6].actions.begin()->second;
  act = act == metal_clash::kMoveNorth ? metal_clash::kMoveSouth : metal_clash::kMoveNorth;
  const ReplayResult r = replay(Registry::builtin(), tampered);
  CHECK_FALSE(r.matches);
  CHECK(r.first_divergence == 6);

  std::vector<std::uint8_t> bytes = encode_trace_header(t.header, t.reset_digest);
  bytes.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_trace(bytes), TraceFormatError);
  std::filesystem::remove(path);
}

TEST_CASE("worker pool over both transports") {
  for (Transport transport : {Transport::Tcp, Transport::Shmem}) {
    CAPTURE(to_string(transport));
    PoolOptions opts;
    opts.workers = 4;
    opts.transport = transport;
    WorkerPool pool(opts);
    for (const auto& r : pool_configure(pool, std::vector<json>(4, configure_body("metal_clash_5lc_5mc"))))
      REQUIRE(r.ok);
    auto replies = pool_reset(pool, std::vector<std::uint64_t>(4, 11));
    REQUIRE(replies[0].ok);
    const WorldState w = replies[0].body().at("state").get<WorldState>();
    const std::vector<JointAction> actions(4, uniform_actions(w, metal_clash::kMoveNorth));
    replies = pool_step(pool, actions);
    for (const auto& r : replies) {
      REQUIRE(r.ok);
      CHECK(r.frame.payload == replies[0].frame.payload);
    }

    pool.kill(2);
    replies = pool_step(pool, actions);
    CHECK(replies[0].ok);
    CHECK(replies[1].ok);
    CHECK_FALSE(replies[2].ok);
    CHECK(replies[2].error.rfind("WorkerFailed", 0) == 0);
    CHECK(replies[3].ok);
    CHECK(replies[0].frame.payload == replies[3].frame.payload);
    CHECK_FALSE(pool.alive(2));
    pool.shutdown();
  }
}

TEST_CASE("a full rollout batch from 32 workers") {
  PoolOptions opts;
  opts.workers = 32;
  WorkerPool pool(opts);
  std::vector<json> cfgs(32, configure_body("metal_clash_5lc_5mc"));
  for (const auto& r : pool_configure(pool, cfgs)) REQUIRE(r.ok);
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 32; ++i) seeds.push_back(i);
  auto replies = pool_reset(pool, seeds);
  std::vector<JointAction> actions;
  for (const auto& r : replies) {
    REQUIRE(r.ok);
    actions.push_back(uniform_actions(r.body().at("state").get<WorldState>(), metal_clash::kAttackNearest));
  }
  replies = pool_step(pool, actions);
  std::set<std::string> digests;
  for (const auto& r : replies) {
    REQUIRE(r.ok);
    CHECK(r.body().at("episode_step") == 1);
    digests.insert(r.body().at("digest").get<std::string>());
  }
  CHECK(digests.size() == 32);
}

TEST_CASE("shared-memory channel carries large frames") {
  auto channel = ShmemChannel::create(4096);
  Connection a(channel->open(0));
  Connection b(channel->open(1));
  Rng rng(1);
  const std::string big = random_payload(rng, 100000);
  std::thread writer([&] { a.send(MessageKind::StepResponse, big); });
  const Frame f = b.receive();
  writer.join();
  CHECK(f.payload == big);
  CHECK(f.sequence == 1);
}
