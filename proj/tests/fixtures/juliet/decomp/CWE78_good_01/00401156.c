void FUN_00401156(char *param_1)
{
  if (param_1 != (char *)0x0) {
    puts(param_1);
  }
  return;
}
