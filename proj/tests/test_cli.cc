#include "oracles.h"

#include <doctest.h>

#include <filesystem>
#include <map>

namespace fs = std::filesystem;
using testutil::run;
using testutil::slurp;
using testutil::spit;

namespace {

const fs::path kTmp = MILSED_TMP_DIR;
const std::string kCli = MILSED_CLI_PATH;

const char* kSpec = R"({
  "classes": ["a", "b", "c"],
  "d": 8, "frames": 40, "frame_hop": 0.05, "noise": 0.2, "seed": 1, "separation": 4.0,
  "background": {"mean": -0.5},
  "durations": [{"mean": 0.6, "jitter": 0.1}, {"mean": 1.0}, {"mean": 0.4}],
  "splits": {
    "train": [{"classes": ["a"], "count": 10}, {"classes": ["b", "c"], "count": 10},
              {"classes": ["c"], "count": 6},
              {"classes": ["b"], "count": 4}],
    "validation": [{"classes": ["a"], "count": 4}, {"classes": ["b"], "count": 4},
                   {"classes": ["c"], "count": 4}],
    "test": [{"classes": ["a", "b"], "count": 4}]
  }
})";

std::string sh(const std::string& args, const std::string& tag) {
  return kCli + " " + args + " > " + (kTmp / (tag + ".out")).string() + " 2> " +
         (kTmp / (tag + ".err")).string();
}

std::string err(const std::string& tag) { return slurp(kTmp / (tag + ".err")); }
std::string out(const std::string& tag) { return slurp(kTmp / (tag + ".out")); }

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

struct Fixture {
  Fixture() {
    static bool ready = false;
    if (ready) return;
    fs::remove_all(kTmp);
    spit(kTmp / "spec.json", kSpec);
    REQUIRE(run(sh("gen " + (kTmp / "spec.json").string() + " -o " + (kTmp / "ds").string(),
                   "gen")) == 0);
    REQUIRE(run(sh("train -q -d " + (kTmp / "ds").string() + " -o " + (kTmp / "run").string() +
                       " --encoder identity --pooling eatp --sds --max-epochs 5 --batch 8",
                   "train")) == 0);
    ready = true;
  }
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "gen") {
  CHECK(fs::exists(kTmp / "ds/classes.txt"));
  CHECK(fs::exists(kTmp / "ds/features/train_00000.txt"));
  CHECK(run(sh("gen " + (kTmp / "missing.json").string() + " -o " + (kTmp / "x").string(), "g2")) == 2);
  CHECK(err("g2").find("does not exist") != std::string::npos);
  CHECK_FALSE(fs::exists(kTmp / "x"));

  const std::string spec = (kTmp / "spec.json").string();
  REQUIRE(run(sh("gen " + spec + " --seed 7 -o " + (kTmp / "s7a").string(), "g3")) == 0);
  REQUIRE(run(sh("gen " + spec + " --seed 7 -o " + (kTmp / "s7b").string(), "g4")) == 0);
  CHECK(tree(kTmp / "s7a") == tree(kTmp / "s7b"));
  CHECK(tree(kTmp / "s7a") != tree(kTmp / "ds"));
  CHECK(run(sh("bogus", "g5")) == 2);
  CHECK(run(sh("", "g6")) == 2);
  CHECK(run(sh("--help", "g7")) == 0);
  CHECK(out("g7").find("File formats") != std::string::npos);
}

TEST_CASE_FIXTURE(Fixture, "train") {
  CHECK(out("train").find("val_macro_f1") != std::string::npos);
  CHECK(fs::exists(kTmp / "run/checkpoint.txt"));
  CHECK(slurp(kTmp / "run/history.csv").rfind("epoch,train_loss,val_macro_f1,lr\n", 0) == 0);
  CHECK(fs::exists(kTmp / "run/allocation.txt"));

  const std::string data = " -d " + (kTmp / "ds").string();
  CHECK(run(sh("train" + data + " -o " + (kTmp / "bad1").string() + " --df df1 --pooling igap", "t1")) == 2);
  CHECK(err("t1").find("DF requires") != std::string::npos);
  CHECK_FALSE(fs::exists(kTmp / "bad1"));
  CHECK(run(sh("train" + data + " -o " + (kTmp / "bad2").string() + " --pooling egmp --sds", "t2")) == 2);
  CHECK(err("t2").find("SDS requires atp") != std::string::npos);
  CHECK(run(sh("train" + data + " -o " + (kTmp / "bad3").string() + " --pooling xatp", "t3")) == 2);

  CHECK(run(sh("train -q" + data + " -o " + (kTmp / "m1").string() +
                   " --encoder identity --sds --df dfw --m 1 --max-epochs 2", "t4")) == 0);
  CHECK(err("t4").find("DF degenerates to general feature") != std::string::npos);

  CHECK(run(sh("train -q" + data + " -o " + (kTmp / "df1").string() +
                   " --encoder identity --sds --df df1 --max-epochs 2", "t5")) == 0);
  CHECK(slurp(kTmp / "df1/allocation.txt").find("mode df1") != std::string::npos);

  // flags override the config file
  spit(kTmp / "train.toml", "[train]\nmax-epochs = 1\nbatch = 4\n");
  CHECK(run(sh("train -q --config " + (kTmp / "train.toml").string() + data + " -o " +
                   (kTmp / "cfg").string() + " --encoder identity --max-epochs 3", "t6")) == 0);
  CHECK(slurp(kTmp / "cfg/checkpoint.txt").find("\"batch_size\":4") != std::string::npos);
  CHECK(slurp(kTmp / "cfg/checkpoint.txt").find("\"max_epochs\":3") != std::string::npos);
}

TEST_CASE_FIXTURE(Fixture, "predict and eval") {
  const std::string ck = " -c " + (kTmp / "run/checkpoint.txt").string();
  const std::string data = " -d " + (kTmp / "ds").string();
  REQUIRE(run(sh("predict" + ck + data + " -o " + (kTmp / "pred").string() + " --beta 0.3333 --dump-probs " +
                     (kTmp / "pred/probs.csv").string() + " --dump-features " +
                     (kTmp / "pred/feats.csv").string(),
                 "p1")) == 0);
  CHECK(slurp(kTmp / "pred/events.csv").rfind("clip_id,class,onset_s,offset_s\n", 0) == 0);
  CHECK(slurp(kTmp / "pred/clips.csv").rfind("clip_id,labels\n", 0) == 0);
  CHECK(slurp(kTmp / "pred/probs.csv").rfind("clip_id,frame,a,b,c\n", 0) == 0);
  CHECK(slurp(kTmp / "pred/feats.csv").rfind("clip_id,frame,f0,", 0) == 0);

  REQUIRE(run(sh("predict" + ck + data + " -o " + (kTmp / "pred27").string() + " --fixed-window 27", "p2")) == 0);
  CHECK(run(sh("predict" + ck + data + " -o " + (kTmp / "pe").string() + " --fixed-window 4", "p3")) == 2);
  CHECK(run(sh("predict" + ck + data + " -o " + (kTmp / "pe").string() + " --beta 1/0", "p4")) == 2);
  REQUIRE(run(sh("predict" + ck + data + " -o " + (kTmp / "pb").string() + " --beta 1/2", "p5")) == 0);

  // empty manifest
  const fs::path empty = kTmp / "empty";
  fs::create_directories(empty);
  fs::copy_file(kTmp / "ds/classes.txt", empty / "classes.txt");
  spit(empty / "test.csv", "clip_id,feature_path,labels\n");
  REQUIRE(run(sh("predict" + ck + " -d " + empty.string() + " -o " + (kTmp / "pempty").string(), "p6")) == 0);
  CHECK(slurp(kTmp / "pempty/events.csv") == "clip_id,class,onset_s,offset_s\n");
  CHECK(slurp(kTmp / "pempty/clips.csv") == "clip_id,labels\n");

  // class-list mismatch
  const fs::path other = kTmp / "other";
  fs::create_directories(other);
  spit(other / "classes.txt", "x\ny\nz\n");
  spit(other / "test.csv", "clip_id,feature_path,labels\n");
  CHECK(run(sh("predict" + ck + " -d " + other.string() + " -o " + (kTmp / "pm").string(), "p7")) == 2);
  CHECK(err("p7").find("does not match") != std::string::npos);

  // eval: references against themselves, against empty predictions, unknown class
  const std::string classes = " --classes " + (kTmp / "ds/classes.txt").string();
  const std::string strong = (kTmp / "ds/test_strong.csv").string();
  spit(kTmp / "ref_weak.csv", "clip_id,labels\ntest_00000,a;b\ntest_00001,a;b\ntest_00002,a;b\ntest_00003,a;b\n");
  const std::string weak = (kTmp / "ref_weak.csv").string();
  REQUIRE(run(sh("eval" + classes + " --ref-strong " + strong + " --pred-events " + strong +
                     " --ref-weak " + weak + " --pred-clips " + weak + " --csv " +
                     (kTmp / "report.csv").string(),
                 "e1")) == 0);
  const std::string report = slurp(kTmp / "report.csv");
  CHECK(report.find("tagging,macro,") != std::string::npos);
  CHECK(report.find("events,a,4,0,0,1.000000,1.000000,1.000000") != std::string::npos);
  CHECK(out("e1").find("Event detection") != std::string::npos);

  spit(kTmp / "none.csv", "clip_id,class,onset_s,offset_s\n");
  REQUIRE(run(sh("eval" + classes + " --ref-strong " + strong + " --pred-events " +
                     (kTmp / "none.csv").string() + " --csv " + (kTmp / "r2.csv").string(),
                 "e2")) == 0);
  CHECK(slurp(kTmp / "r2.csv").find("events,a,0,0,4,0.000000,0.000000,0.000000") != std::string::npos);

  spit(kTmp / "cow.csv", "clip_id,class,onset_s,offset_s\ntest_00000,cow,0.1,0.2\n");
  CHECK(run(sh("eval" + classes + " --ref-strong " + strong + " --pred-events " +
                   (kTmp / "cow.csv").string(),
               "e3")) == 2);
  CHECK(err("e3").find("cow") != std::string::npos);

  // hand example from the metric tests
  spit(kTmp / "hand_ref.csv", "clip_id,class,onset_s,offset_s\nx,a,1.0,2.0\ny,a,1.0,2.0\n");
  spit(kTmp / "hand_pred.csv", "clip_id,class,onset_s,offset_s\nx,a,1.1,2.1\ny,a,1.3,2.0\n");
  REQUIRE(run(sh("eval" + classes + " --ref-strong " + (kTmp / "hand_ref.csv").string() +
                     " --pred-events " + (kTmp / "hand_pred.csv").string() + " --csv " +
                     (kTmp / "r3.csv").string(),
                 "e4")) == 0);
  CHECK(slurp(kTmp / "r3.csv").find("events,a,1,1,1,0.500000,0.500000,0.500000") != std::string::npos);
}

TEST_CASE_FIXTURE(Fixture, "alloc") {
  REQUIRE(run(sh("alloc -d " + (kTmp / "ds").string() + " --df df1 --dim 160", "a1")) == 0);
  CHECK(out("a1").find("160") != std::string::npos);
  CHECK(run(sh("alloc -d " + (kTmp / "ds").string() + " --df df1 --m 1", "a2")) == 0);
  CHECK(err("a2").find("DF degenerates to general feature") != std::string::npos);
}
