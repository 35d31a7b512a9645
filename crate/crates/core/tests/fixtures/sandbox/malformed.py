import sys

sys.stdin.read()
print("fill 3, stream 1")
