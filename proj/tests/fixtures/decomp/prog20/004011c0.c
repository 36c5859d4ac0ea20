void FUN_004011c0(undefined8 param_1)
{
  char local_108 [256];

  snprintf(local_108,0x100,"ls %s",param_1);
  system(local_108);
  return;
}
