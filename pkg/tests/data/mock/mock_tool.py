"""Stand-in for an external SAST tool: ``mock_tool.py MODE APK OUT [ARG]``."""
import shutil
import subprocess
import sys
import time

mode, apk, out = sys.argv[1:4]
arg = sys.argv[4] if len(sys.argv) > 4 else ""

if mode == "ok":
    shutil.copyfile(arg, out)
elif mode == "sleep":
    # a grandchild in the same process group must die with the tool
    subprocess.Popen([sys.executable, "-c", f"import time; time.sleep({float(arg) * 2})"])
    time.sleep(float(arg))
    open(out, "w").close()
elif mode == "fail":
    print("working on " + apk)
    print(arg, file=sys.stderr)
    sys.exit(1)
elif mode == "noreport":
    print(arg)
elif mode == "garbage":
    with open(out, "w") as f:
        f.write('{"findings": [')
else:
    sys.exit(f"unknown mode {mode}")
