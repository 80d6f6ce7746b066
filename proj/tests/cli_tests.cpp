// End-to-end checks of the command-line surface: verbs, exit codes, file
// outputs. Receives the binary path as argv[1].

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "pcc/cloud_io.h"
#include "pcc/model.h"
#include "test_support.h"

namespace {

int failures = 0;

void expect(bool ok, const std::string& what) {
  std::printf("%s %s\n", ok ? "[ok]" : "[FAIL]", what.c_str());
  if (!ok) ++failures;
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string capture(const std::string& cmd) {
  FILE* pipe = popen((cmd + " 2>/dev/null").c_str(), "r");
  if (!pipe) return {};
  std::string out;
  char buf[512];
  while (fgets(buf, sizeof buf, pipe)) out += buf;
  pclose(pipe);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: cli_tests <pcc-binary>\n");
    return 2;
  }
  const std::string bin = argv[1];
  const std::string dir = "cli_scratch";
  std::system(("rm -rf " + dir + " && mkdir -p " + dir).c_str());

  pcc::PointCloud cloud;
  cloud.points = testsup::sphere_with_handle(512, 4);
  pcc::write_cloud(dir + "/in.xyz", cloud);

  // Seed weights without training: a freshly initialized model is a valid
  // codec for the bit-exactness checks.
  pcc::CodecModel model(pcc::ModelDims::standard(16), 7);
  model.save(dir + "/w.ipdw");

  expect(run(bin + " compress -i " + dir + "/in.xyz -w " + dir + "/w.ipdw -o " + dir +
             "/out.ipda --k 32 --roc 0.5") == 0,
         "compress exits 0");
  expect(run(bin + " decompress -i " + dir + "/out.ipda -w " + dir + "/w.ipdw -o " + dir +
             "/rec.xyz") == 0,
         "decompress exits 0");

  const pcc::PointCloud rec = pcc::parse_cloud(dir + "/rec.xyz");
  expect(rec.points.size() > 0 && rec.points.size() % 16 == 0,
         "reconstruction holds m*k points");

  // Determinism: decompress twice, byte-identical clouds.
  expect(run(bin + " decompress -i " + dir + "/out.ipda -w " + dir + "/w.ipdw -o " + dir +
             "/rec2.xyz") == 0,
         "second decompress exits 0");
  {
    std::ifstream a(dir + "/rec.xyz"), b(dir + "/rec2.xyz");
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    expect(sa.str() == sb.str(), "decompression is byte-deterministic");
  }

  const std::string eval_line =
      capture(bin + " eval --ref " + dir + "/in.xyz --test " + dir + "/in.xyz");
  expect(eval_line.find("chamfer=0 ") == 0, "self-eval reports zero chamfer");
  expect(eval_line.find("uc=1") != std::string::npos, "self-eval reports uc=1");
  expect(eval_line.find("d1_psnr=inf") != std::string::npos, "self-eval reports inf psnr");

  const std::string eval_bpp = capture(bin + " eval --ref " + dir + "/in.xyz --test " + dir +
                                       "/rec.xyz --container " + dir + "/out.ipda");
  expect(eval_bpp.find(" bpp=") != std::string::npos, "eval appends bpp with a container");

  const std::string inspect = capture(bin + " inspect -i " + dir + "/out.ipda");
  expect(inspect.find("n=512") != std::string::npos, "inspect prints the header");
  expect(inspect.find("octree_depth=") != std::string::npos, "inspect prints the octree depth");

  const std::string codes = capture(bin + " inspect -i " + dir + "/out.ipda -w " + dir +
                                    "/w.ipdw --codes");
  expect(codes.find("codes=") != std::string::npos, "inspect dumps latent codes");

  // Short training run produces a loadable weight file and a log.
  expect(run(bin + " train -i " + dir + "/in.xyz -o " + dir + "/t.ipdw --k 16 --epochs 3 "
                   "--seed 5 --log " + dir + "/train.log") == 0,
         "train exits 0");
  {
    std::ifstream log(dir + "/train.log");
    std::string line;
    int lines = 0;
    double step, dcd, rate, loss;
    bool parsed = true;
    while (std::getline(log, line)) {
      ++lines;
      parsed = parsed && std::sscanf(line.c_str(), "%lf %lf %lf %lf", &step, &dcd, &rate,
                                     &loss) == 4;
    }
    expect(lines == 3 && parsed, "training log holds one parseable record per step");
  }
  expect(run(bin + " compress -i " + dir + "/in.xyz -w " + dir + "/t.ipdw -o " + dir +
             "/out2.ipda --k 16") == 0,
         "trained weights drive compression");

  // Adversarial smoke through the CLI.
  expect(run(bin + " train -i " + dir + "/in.xyz -o " + dir + "/g.ipdw --k 16 --epochs 2 "
                   "--mode gan --init-weights " + dir + "/t.ipdw --critic-out " + dir +
             "/c.ipdw --lr 1e-4") == 0,
         "gan training exits 0");

  // A 2048-point cloud at K=256 must clear compress+decompress+eval well
  // inside a minute on one core.
  {
    pcc::PointCloud big;
    big.points = testsup::sphere_with_handle(2048, 8);
    pcc::write_cloud(dir + "/big.xyz", big);
    pcc::CodecModel wide(pcc::ModelDims::standard(128), 3);
    wide.save(dir + "/wide.ipdw");
    const auto t0 = std::chrono::steady_clock::now();
    const bool pipeline_ok =
        run(bin + " compress -i " + dir + "/big.xyz -w " + dir + "/wide.ipdw -o " + dir +
            "/big.ipda --k 256 --roc 0.25") == 0 &&
        run(bin + " decompress -i " + dir + "/big.ipda -w " + dir + "/wide.ipdw -o " + dir +
            "/big_rec.xyz") == 0 &&
        run(bin + " eval --ref " + dir + "/big.xyz --test " + dir + "/big_rec.xyz --container " +
            dir + "/big.ipda") == 0;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    expect(pipeline_ok && secs < 60.0,
           "K=256 pipeline on 2048 points finishes under a minute (" +
               std::to_string(secs).substr(0, 4) + " s)");
  }

  // Exit codes: 2 parse, 3 format mismatch, 4 malformed stream.
  std::system(("printf 'not a cloud\\n' > " + dir + "/bad.xyz").c_str());
  expect(run(bin + " compress -i " + dir + "/bad.xyz -w " + dir + "/w.ipdw -o " + dir +
             "/x.ipda --k 32") == 2,
         "parse failure exits 2");
  expect(run(bin + " compress -i " + dir + "/in.xyz -w " + dir + "/w.ipdw -o " + dir +
             "/x.ipda --k 64") == 3,
         "weight mismatch exits 3");
  {
    std::ifstream in(dir + "/out.ipda", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes = bytes.substr(0, bytes.size() / 2);
    std::ofstream out(dir + "/trunc.ipda", std::ios::binary);
    out << bytes;
  }
  expect(run(bin + " decompress -i " + dir + "/trunc.ipda -w " + dir + "/w.ipdw -o " + dir +
             "/y.xyz") == 4,
         "malformed stream exits 4");

  std::printf("%s\n", failures == 0 ? "cli_tests: all passed" : "cli_tests: FAILURES");
  return failures == 0 ? 0 : 1;
}
