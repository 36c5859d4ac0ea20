void FUN_00401188(void)
{
  char *pcVar1;
  FILE *__stream;
  size_t local_80;
  char local_78 [104];

  builtin_strncpy(local_78,"ls ",4);
  memset(local_78 + 4,0,0x60);
  local_80 = strlen(local_78);
  pcVar1 = fgets(local_78 + local_80,100 - (int)local_80,stdin);
  if (pcVar1 != (char *)0x0) {
    local_80 = strlen(local_78);
    if ((local_80 != 0) && (local_78[local_80 - 1] == '\n')) {
      local_78[local_80 - 1] = '\0';
    }
  }
  __stream = popen(local_78,"w");
  if (__stream != (FILE *)0x0) {
    pclose(__stream);
  }
  return;
}
